//! Wire protocol, session gateway and the HTTP/WebSocket server.

mod gateway;
mod protocol;
mod server;

pub use gateway::{
    outbound_for, ConnId, Gateway, GatewayError, Hub, LoginRequest, LoginResponse, Outbound,
};
pub use protocol::{
    message_for, parse_client, ClientMessage, ProtocolError, ServerEnvelope, ServerMessage,
    PROTOCOL_VERSION,
};
pub use server::{router, serve, Liveness};
