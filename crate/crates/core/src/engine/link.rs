use thiserror::Error;

use super::queue::SimTime;

/// Default data packet size in bytes.
pub const DEFAULT_PACKET_SIZE: u32 = 1000;
/// Size of an acknowledgement in bytes.
pub const ACK_SIZE: u32 = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub flow_id: u32,
    /// Connection incarnation of the flow; a flow that is deactivated and
    /// later re-activated starts a new connection.
    pub conn: u32,
    pub size: u32,
    pub seq_no: u64,
    pub enqueue_time: SimTime,
    pub is_ack: bool,
}

impl Packet {
    pub fn bits(&self) -> f64 {
        f64::from(self.size) * 8.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LinkError {
    #[error("link bandwidth must be positive and finite, got {0} bit/s")]
    Bandwidth(f64),
    #[error("propagation delay must be non-negative and finite, got {0} s")]
    PropDelay(f64),
}

/// A point-to-point link: FIFO serialization at `bandwidth` bit/s followed by
/// a fixed propagation delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    bandwidth: f64,
    prop_delay: SimTime,
}

impl Link {
    pub fn new(bandwidth: f64, prop_delay: SimTime) -> Result<Self, LinkError> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(LinkError::Bandwidth(bandwidth));
        }
        if !(prop_delay.is_finite() && prop_delay >= 0.0) {
            return Err(LinkError::PropDelay(prop_delay));
        }
        Ok(Self {
            bandwidth,
            prop_delay,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn prop_delay(&self) -> SimTime {
        self.prop_delay
    }

    pub fn serialization_time(&self, size_bytes: u32) -> SimTime {
        f64::from(size_bytes) * 8.0 / self.bandwidth
    }
}

/// Time from the first bit entering `link` until the last bit arrives at the
/// far end.
pub fn transmit_time(pkt: &Packet, link: &Link) -> SimTime {
    link.serialization_time(pkt.size) + link.prop_delay
}
