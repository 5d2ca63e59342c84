//! Deterministic discrete-event core: clock and event queue, links, seeded
//! randomness, and the dumbbell network that ties TCP sources to the
//! bottleneck queue.

mod link;
mod network;
mod queue;
mod rng;

pub use link::{transmit_time, Link, LinkError, Packet, ACK_SIZE, DEFAULT_PACKET_SIZE};
pub use network::{EventKind, FlowPath, NetworkConfig, NetworkError, Simulation, SimulationReport};
pub use queue::{Event, EventQueue, ScheduleError, SimTime};
pub use rng::SimRng;
