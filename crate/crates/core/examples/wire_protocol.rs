//! Round-trip the client and server envelopes.

use parley::transport::{parse_client, ClientMessage, ServerEnvelope, ServerMessage};

fn main() {
    let outgoing = [
        ClientMessage::Send {
            client_msg_id: Some("m-1".into()),
            body: "Hey, I'm not going".into(),
        },
        ClientMessage::Skip {
            intercept_id: "ix-1".parse().unwrap(),
        },
        ClientMessage::Revise {
            intercept_id: "ix-2".parse().unwrap(),
            body: "Could we talk later?".into(),
        },
        ClientMessage::GuideRequest {},
    ];
    for msg in &outgoing {
        let json = msg.to_json();
        assert_eq!(&parse_client(&json).unwrap(), msg);
        println!("client  {json}");
    }

    for bad in [
        r#"{"v":1,"type":"shout","body":"x"}"#,
        r#"{"v":9,"type":"guide_request"}"#,
        "not json",
    ] {
        let err = parse_client(bad).unwrap_err();
        println!("reject  {bad:<36} -> {}", err.code());
    }

    let notice = ServerMessage::ErrorNotice {
        code: "backend_timeout".into(),
        message: "guide service is slow, try again".into(),
        retryable: true,
        client_msg_id: None,
    };
    let json = ServerEnvelope::new(notice).to_json();
    println!("server  {json}");
    assert!(ServerEnvelope::parse(&json).is_ok());
}
