//! Unit-ball geometry: the regularized incomplete beta function, spherical
//! caps and sectors, closed-form volume bounds, and the lonely-cap search.

mod cap;
mod lonely;
mod special;

pub use cap::{
    ball_volume, bounds_check, cap_count, in_cap, in_sector, sector_volume, BoundCheck,
    BoundsReport, CapCount, SphericalCap,
};
pub use lonely::{find_lonely_cap, find_lonely_cap_with, LonelyMode, LonelySearch};
pub use special::{ln_beta, ln_gamma, reg_inc_beta, reg_inc_beta_xab, BetaParams};
