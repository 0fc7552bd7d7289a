pub mod bundle;
pub mod correspond;
pub mod demo;
pub mod eval;
pub mod geom;
pub mod registration;
pub mod seed;
pub mod spatial;
pub mod warp;
