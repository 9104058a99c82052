//! Parcel-level urban simulation toolkit.
//!
//! The crate turns road networks into land parcels, labels built-up parcels
//! with a constrained vector cellular automaton, simulates scenario-driven
//! urban expansion city by city, and estimates population exposure to PM2.5
//! from station readings.
//!
//! Modules follow the processing order of the pipeline:
//!
//! * [`road_parcel`]: road cleaning, road space and parcel delineation
//! * [`poi_density`]: POI assignment and standardized land-use density
//! * [`urban_identify`]: neighbor graph and urban identification
//! * [`expansion_sim`]: per-city targets, calibration and expansion runs
//! * [`exposure`]: interpolation, exceedance counting and aggregation
//! * [`io`], [`config`], [`pipeline`]: files, configuration and orchestration

pub mod config;
pub mod error;
pub mod expansion_sim;
pub mod exposure;
pub mod fixture;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod poi_density;
pub mod road_parcel;
pub mod urban_identify;

pub use error::{Error, Result};
pub use road_parcel::{LandState, Parcel, ParcelId};
