//! Block dissemination state machines. Both run inside [`crate::engine::World`].

pub mod pichu;
pub mod traditional;
