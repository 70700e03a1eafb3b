//! Symmetry analysis and numerical verification toolkit for the sixth-order
//! thin film equation `u_t = (f(u) u_xxxxx)_x`.

pub mod jetcalc;
pub mod liesym;
pub mod odeint;
pub mod pdesim;
pub mod reductions;
pub mod symexpr;
