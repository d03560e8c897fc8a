//! Datapath model: host DMA, VFIFO, on-board stream switch, MAC framing,
//! board-to-board links and the stencil IPs.

pub mod frame;
pub mod ip;
pub mod link;
pub mod sim;

pub use frame::{mfh_decap, mfh_encap, FrameAction, MacFrame, MacFrameHandler, DEFAULT_MAX_PAYLOAD, FRAME_HEADER_BYTES};
pub use ip::{beats_from_cells, cells_from_beats, fill_latency_cycles, ip_process_stream, IpStreamOutput, LinePipeline, StreamBeat, PE_COUNT};
pub use link::{transfer_time, LinkParams};
pub use sim::{simulate, simulate_replay, ComponentStats, HostProgram, ObservedPath, SimParams, SimResult, TraceEvent};
