pub mod exprlang;
pub mod families;
pub mod gauge;
pub mod jets;
pub mod paraframe;
pub mod tensor;
pub mod tensorcalc;
pub mod verify;
