pub mod device;
pub mod enodeb;
