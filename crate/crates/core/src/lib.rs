pub mod bench;
pub mod chirality;
pub mod circuit;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod modes;
pub mod openloss;
