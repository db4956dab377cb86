//! Lower bounds on the error of LOCC protocols that discriminate bipartite
//! product states.
//!
//! The crate is organised bottom-up: [`matkernel`] provides dense complex
//! linear algebra, [`tiling`] and [`bases`] describe product bases through the
//! grid tilings they induce, [`measures`] evaluates disturbance and information
//! gain for product operators, [`bounds`] turns rigidity constants into error
//! bounds, [`estimator`] brackets the nonlocality constant numerically,
//! [`loccsim`] simulates finite protocol trees, and [`verify`] checks the
//! supporting inequalities on seeded random inputs.

pub mod matkernel;
pub mod rng;
pub mod tiling;
pub mod bases;
pub mod measures;
pub mod bounds;
pub mod optim;
pub mod estimator;
pub mod loccsim;
pub mod verify;
