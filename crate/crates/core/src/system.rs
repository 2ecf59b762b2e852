//! Physical network instances: geometry, link statistics, pilots and
//! estimators, plus per-round channel draws.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{AggregationWeights, LinkState, RoundInputs};
use crate::channel::{sample_channels, ArrayStatistics, ChannelError, ChannelRealization, LargeScaleParams};
use crate::estimation::{assign_pilots, pilot_observation, EstimationError, MmseEstimator, PilotPlan};
use crate::linalg::{CMat, CVec};
use crate::rng::{stream, Purpose};
use crate::topology::{Area, DistributionMode, NetworkGeometry, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("{devices} devices cannot be split evenly into {groups} groups")]
    UnevenGroups { devices: usize, groups: usize },
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub area_m: f64,
    pub aps: usize,
    pub ap_antennas: usize,
    pub cells: usize,
    pub bs_antennas: usize,
    pub devices: usize,
    pub groups: usize,
    pub tau_p: usize,
    pub mode: DistributionMode,
    pub max_power_dbm: f64,
    pub pilot_power_dbm: f64,
    pub noise_dbm: f64,
    pub asd_deg: f64,
    pub large_scale: LargeScaleParams,
}

impl SystemParams {
    /// Small network used by the acceptance suite: 4 APs with 2 antennas,
    /// 4 cells with 8-antenna BSs, 6 devices in 2 groups, 3 pilots.
    pub fn desk() -> Self {
        Self {
            area_m: 500.0,
            aps: 4,
            ap_antennas: 2,
            cells: 4,
            bs_antennas: 8,
            devices: 6,
            groups: 2,
            tau_p: 3,
            mode: DistributionMode::Mode2,
            max_power_dbm: 20.0,
            pilot_power_dbm: 20.0,
            noise_dbm: -96.0,
            asd_deg: 15.0,
            large_scale: LargeScaleParams::default(),
        }
    }

    pub fn noise_var(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn power(&self) -> Vec<f64> {
        vec![dbm_to_watts(self.max_power_dbm); self.devices]
    }

    pub fn group_sizes(&self) -> Result<Vec<usize>, SystemError> {
        if self.groups == 0 || self.devices % self.groups != 0 {
            return Err(SystemError::UnevenGroups {
                devices: self.devices,
                groups: self.groups,
            });
        }
        Ok(vec![self.devices / self.groups; self.groups])
    }
}

/// Statistics and estimators of one receiver network.
#[derive(Debug, Clone)]
pub struct ArrayLinks {
    pub stats: ArrayStatistics,
    pub estimator: MmseEstimator,
    pub err_cov: Vec<Vec<CMat>>,
}

impl ArrayLinks {
    fn new(stats: ArrayStatistics, plan: &PilotPlan, noise_var: f64) -> Self {
        let estimator = MmseEstimator::new(&stats, plan, noise_var);
        let err_cov = estimator.error_covariances();
        Self { stats, estimator, err_cov }
    }
}

/// True channels and their estimates for one round.
#[derive(Debug, Clone)]
pub struct Realization {
    pub truth: ChannelRealization,
    pub h_hat: Vec<Vec<CVec>>,
}

/// Which receiver networks an instance builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Networks {
    pub cell_free: bool,
    pub cellular: bool,
}

impl Networks {
    pub const BOTH: Self = Self { cell_free: true, cellular: true };
}

/// One drop of the network: fixed geometry and long-term statistics.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: SystemParams,
    pub seed: u64,
    pub geometry: NetworkGeometry,
    pub plan: PilotPlan,
    pub cell_free: Option<ArrayLinks>,
    pub cellular: Option<ArrayLinks>,
}

const CELL_FREE_ID: u64 = 0;
const CELLULAR_ID: u64 = 1;

impl Instance {
    pub fn generate(params: &SystemParams, networks: Networks, seed: u64) -> Result<Self, SystemError> {
        let area = Area::new(params.area_m)?;
        let sizes = params.group_sizes()?;
        let geometry = NetworkGeometry::generate(
            area,
            params.aps,
            params.cells,
            params.mode,
            &sizes,
            &mut stream(seed, 0, Purpose::Geometry, 0),
        )?;
        let plan = assign_pilots(&geometry.group_of_device, params.tau_p, dbm_to_watts(params.pilot_power_dbm))?;
        let asd = params.asd_deg.to_radians();
        let noise = params.noise_var();
        let build = |receivers: &[crate::topology::Point], antennas: usize, id: u64| {
            ArrayStatistics::generate(
                &geometry.device_positions,
                receivers,
                area,
                antennas,
                &params.large_scale,
                asd,
                &mut stream(seed, 0, Purpose::Shadowing, id),
            )
            .map(|s| ArrayLinks::new(s, &plan, noise))
        };
        let cell_free = networks
            .cell_free
            .then(|| build(&geometry.ap_positions, params.ap_antennas, CELL_FREE_ID))
            .transpose()?;
        let cellular = networks
            .cellular
            .then(|| build(&geometry.bs_positions, params.bs_antennas, CELLULAR_ID))
            .transpose()?;
        Ok(Self {
            params: *params,
            seed,
            geometry,
            plan,
            cell_free,
            cellular,
        })
    }

    fn realize(&self, links: &ArrayLinks, round: u64, id: u64) -> Realization {
        let truth = sample_channels(&links.stats, &mut stream(self.seed, round, Purpose::SmallScale, id));
        let obs = pilot_observation(
            &truth,
            &self.plan,
            self.params.noise_var(),
            &mut stream(self.seed, round, Purpose::PilotNoise, id),
        );
        let h_hat = links.estimator.estimate(&obs, &self.plan);
        Realization { truth, h_hat }
    }

    /// Channels and estimates of round `round` for each built network.
    pub fn round(&self, round: u64) -> RoundChannels {
        RoundChannels {
            cell_free: self.cell_free.as_ref().map(|l| self.realize(l, round, CELL_FREE_ID)),
            cellular: self.cellular.as_ref().map(|l| self.realize(l, round, CELLULAR_ID)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundChannels {
    pub cell_free: Option<Realization>,
    pub cellular: Option<Realization>,
}

impl RoundChannels {
    /// Scheme inputs borrowing this round's channels.
    pub fn inputs<'a>(
        &'a self,
        instance: &'a Instance,
        weights: &'a AggregationWeights,
        power: &'a [f64],
    ) -> RoundInputs<'a> {
        let link = |r: &'a Option<Realization>, l: &'a Option<ArrayLinks>| {
            r.as_ref().zip(l.as_ref()).map(|(r, l)| LinkState {
                truth: &r.truth,
                h_hat: &r.h_hat,
                err_cov: &l.err_cov,
            })
        };
        RoundInputs {
            weights,
            power,
            noise_var: instance.params.noise_var(),
            cell_free: link(&self.cell_free, &instance.cell_free),
            cellular: link(&self.cellular, &instance.cellular),
        }
    }
}
