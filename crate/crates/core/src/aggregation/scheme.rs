use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use super::{
    alternating_optimize, level1_combiners, level1_stacked, recover_level1, recover_level2,
    recover_level3, received_signals, stacked_view, cellular_problem, weighted_sum_mse,
    AggregationError, AggregationProblem, AggregationWeights, OptHistory, SolverOptions,
    TxCoefficients,
};
use crate::accounting::CooperationLevel;
use crate::channel::ChannelRealization;
use crate::linalg::{c, CMat, CVec, C64};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infrastructure {
    CellFree,
    Cellular,
    None,
}

/// True channels and estimates, indexed `[device][receiver]`.
#[derive(Debug, Clone, Copy)]
pub struct LinkState<'a> {
    pub truth: &'a ChannelRealization,
    pub h_hat: &'a [Vec<CVec>],
    pub err_cov: &'a [Vec<CMat>],
}

/// Everything a scheme sees in one round.
#[derive(Debug, Clone, Copy)]
pub struct RoundInputs<'a> {
    pub weights: &'a AggregationWeights,
    pub power: &'a [f64],
    pub noise_var: f64,
    pub cell_free: Option<LinkState<'a>>,
    pub cellular: Option<LinkState<'a>>,
}

impl<'a> RoundInputs<'a> {
    fn links(&self, scheme: &'static str, infra: Infrastructure) -> Result<LinkState<'a>, AggregationError> {
        match infra {
            Infrastructure::CellFree => self.cell_free,
            Infrastructure::Cellular => self.cellular,
            Infrastructure::None => None,
        }
        .ok_or(AggregationError::MissingLinks(scheme))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CombinerSet {
    /// One stacked vector per group.
    pub level3: Vec<CVec>,
    /// `[group][ap]`.
    pub level1: Vec<Vec<CVec>>,
    /// One BS vector per group.
    pub cellular: Vec<CVec>,
}

/// Transmit coefficients and combiners chosen for one round.
#[derive(Debug, Clone)]
pub struct Design {
    pub b: TxCoefficients,
    pub combiners: CombinerSet,
    /// Estimate-conditioned MSE per group.
    pub group_mse: Vec<f64>,
    pub weighted_mse: f64,
    pub history: Option<OptHistory>,
    pub multipliers: Vec<f64>,
}

pub trait AggregationScheme: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn infrastructure(&self) -> Infrastructure;

    fn cooperation_level(&self) -> Option<CooperationLevel> {
        None
    }

    fn design(
        &self,
        inputs: &RoundInputs<'_>,
        opts: &SolverOptions,
        warm: Option<&TxCoefficients>,
    ) -> Result<Design, AggregationError>;

    /// Transmits one slot of normalized symbols and returns each group's
    /// complex recovery, mean offset included.
    fn recover_slot(
        &self,
        design: &Design,
        inputs: &RoundInputs<'_>,
        symbols: &[f64],
        rng: &mut SimRng,
    ) -> Result<Vec<C64>, AggregationError>;
}

fn shared_problem(inputs: &RoundInputs<'_>, links: &LinkState<'_>) -> AggregationProblem {
    AggregationProblem::shared(
        stacked_view(links.h_hat, links.err_cov),
        inputs.weights.clone(),
        inputs.power.to_vec(),
        inputs.noise_var,
    )
}

fn finish(problem: &AggregationProblem, sol: super::AlternatingSolution) -> (Design, Vec<CVec>) {
    let group_mse = (0..problem.groups())
        .map(|g| super::group_mse(problem, &sol.b.b, &sol.combiners[g], g))
        .collect();
    let design = Design {
        weighted_mse: sol.history.last(),
        b: sol.b,
        combiners: CombinerSet::default(),
        group_mse,
        history: Some(sol.history),
        multipliers: sol.multipliers,
    };
    (design, sol.combiners)
}

/// Centralized combining at the CPU on all received pilot and data signals.
#[derive(Debug, Default)]
pub struct Level3;

/// Centrally designed combiners applied locally at each AP.
#[derive(Debug, Default)]
pub struct Level2;

/// Local combining at each AP with plain averaging at the CPU.
#[derive(Debug, Default)]
pub struct Level1;

/// Each group decoded by its own serving BS.
#[derive(Debug, Default)]
pub struct Cellular;

/// Exact aggregation with no channel.
#[derive(Debug, Default)]
pub struct ErrorFree;

fn centralized_design(
    name: &'static str,
    inputs: &RoundInputs<'_>,
    opts: &SolverOptions,
    warm: Option<&TxCoefficients>,
) -> Result<Design, AggregationError> {
    inputs.weights.validate()?;
    let links = inputs.links(name, Infrastructure::CellFree)?;
    let problem = shared_problem(inputs, &links);
    let (mut design, v) = finish(&problem, alternating_optimize(&problem, opts, warm));
    design.combiners.level3 = v;
    Ok(design)
}

impl AggregationScheme for Level3 {
    fn name(&self) -> &'static str {
        "level3"
    }

    fn infrastructure(&self) -> Infrastructure {
        Infrastructure::CellFree
    }

    fn cooperation_level(&self) -> Option<CooperationLevel> {
        Some(CooperationLevel::Level3)
    }

    fn design(
        &self,
        inputs: &RoundInputs<'_>,
        opts: &SolverOptions,
        warm: Option<&TxCoefficients>,
    ) -> Result<Design, AggregationError> {
        centralized_design(self.name(), inputs, opts, warm)
    }

    fn recover_slot(
        &self,
        design: &Design,
        inputs: &RoundInputs<'_>,
        symbols: &[f64],
        rng: &mut SimRng,
    ) -> Result<Vec<C64>, AggregationError> {
        let links = inputs.links(self.name(), Infrastructure::CellFree)?;
        let y = crate::linalg::stack(&received_signals(links.truth, &design.b, symbols, inputs.noise_var, rng));
        Ok(design
            .combiners
            .level3
            .iter()
            .enumerate()
            .map(|(g, v)| recover_level3(v, &y, inputs.weights, g))
            .collect())
    }
}

impl AggregationScheme for Level2 {
    fn name(&self) -> &'static str {
        "level2"
    }

    fn infrastructure(&self) -> Infrastructure {
        Infrastructure::CellFree
    }

    fn cooperation_level(&self) -> Option<CooperationLevel> {
        Some(CooperationLevel::Level2)
    }

    fn design(
        &self,
        inputs: &RoundInputs<'_>,
        opts: &SolverOptions,
        warm: Option<&TxCoefficients>,
    ) -> Result<Design, AggregationError> {
        centralized_design(self.name(), inputs, opts, warm)
    }

    fn recover_slot(
        &self,
        design: &Design,
        inputs: &RoundInputs<'_>,
        symbols: &[f64],
        rng: &mut SimRng,
    ) -> Result<Vec<C64>, AggregationError> {
        let links = inputs.links(self.name(), Infrastructure::CellFree)?;
        let y = received_signals(links.truth, &design.b, symbols, inputs.noise_var, rng);
        Ok(design
            .combiners
            .level3
            .iter()
            .enumerate()
            .map(|(g, v)| recover_level2(v, &y, inputs.weights, g))
            .collect())
    }
}

impl AggregationScheme for Level1 {
    fn name(&self) -> &'static str {
        "level1"
    }

    fn infrastructure(&self) -> Infrastructure {
        Infrastructure::CellFree
    }

    fn cooperation_level(&self) -> Option<CooperationLevel> {
        Some(CooperationLevel::Level1)
    }

    /// Devices always transmit at full power; solver options do not apply.
    fn design(
        &self,
        inputs: &RoundInputs<'_>,
        _opts: &SolverOptions,
        _warm: Option<&TxCoefficients>,
    ) -> Result<Design, AggregationError> {
        inputs.weights.validate()?;
        let links = inputs.links(self.name(), Infrastructure::CellFree)?;
        let local = level1_combiners(links.h_hat, links.err_cov, inputs.weights, inputs.power, inputs.noise_var);
        let problem = shared_problem(inputs, &links);
        let b = TxCoefficients::full_power(inputs.power);
        let stacked: Vec<CVec> = local.iter().map(|v| level1_stacked(v)).collect();
        let group_mse = (0..problem.groups())
            .map(|g| super::group_mse(&problem, &b.b, &stacked[g], g))
            .collect();
        Ok(Design {
            weighted_mse: weighted_sum_mse(&problem, &b.b, &stacked),
            b,
            combiners: CombinerSet {
                level1: local,
                ..CombinerSet::default()
            },
            group_mse,
            history: None,
            multipliers: vec![0.0; inputs.weights.devices()],
        })
    }

    fn recover_slot(
        &self,
        design: &Design,
        inputs: &RoundInputs<'_>,
        symbols: &[f64],
        rng: &mut SimRng,
    ) -> Result<Vec<C64>, AggregationError> {
        let links = inputs.links(self.name(), Infrastructure::CellFree)?;
        let y = received_signals(links.truth, &design.b, symbols, inputs.noise_var, rng);
        Ok(design
            .combiners
            .level1
            .iter()
            .enumerate()
            .map(|(g, v)| recover_level1(v, &y, inputs.weights, g))
            .collect())
    }
}

impl AggregationScheme for Cellular {
    fn name(&self) -> &'static str {
        "cellular"
    }

    fn infrastructure(&self) -> Infrastructure {
        Infrastructure::Cellular
    }

    fn design(
        &self,
        inputs: &RoundInputs<'_>,
        opts: &SolverOptions,
        warm: Option<&TxCoefficients>,
    ) -> Result<Design, AggregationError> {
        inputs.weights.validate()?;
        let links = inputs.links(self.name(), Infrastructure::Cellular)?;
        let problem = cellular_problem(
            links.h_hat,
            links.err_cov,
            inputs.weights.clone(),
            inputs.power.to_vec(),
            inputs.noise_var,
        );
        let (mut design, w) = finish(&problem, alternating_optimize(&problem, opts, warm));
        design.combiners.cellular = w;
        Ok(design)
    }

    fn recover_slot(
        &self,
        design: &Design,
        inputs: &RoundInputs<'_>,
        symbols: &[f64],
        rng: &mut SimRng,
    ) -> Result<Vec<C64>, AggregationError> {
        let links = inputs.links(self.name(), Infrastructure::Cellular)?;
        let y = received_signals(links.truth, &design.b, symbols, inputs.noise_var, rng);
        Ok(design
            .combiners
            .cellular
            .iter()
            .enumerate()
            .map(|(g, w)| recover_level3(w, &y[g], inputs.weights, g))
            .collect())
    }
}

impl AggregationScheme for ErrorFree {
    fn name(&self) -> &'static str {
        "errorfree"
    }

    fn infrastructure(&self) -> Infrastructure {
        Infrastructure::None
    }

    fn design(
        &self,
        inputs: &RoundInputs<'_>,
        _opts: &SolverOptions,
        _warm: Option<&TxCoefficients>,
    ) -> Result<Design, AggregationError> {
        inputs.weights.validate()?;
        let groups = inputs.weights.groups();
        Ok(Design {
            b: TxCoefficients::full_power(inputs.power),
            combiners: CombinerSet::default(),
            group_mse: vec![0.0; groups],
            weighted_mse: 0.0,
            history: None,
            multipliers: vec![0.0; inputs.weights.devices()],
        })
    }

    fn recover_slot(
        &self,
        _design: &Design,
        inputs: &RoundInputs<'_>,
        symbols: &[f64],
        _rng: &mut SimRng,
    ) -> Result<Vec<C64>, AggregationError> {
        let w = inputs.weights;
        Ok((0..w.groups())
            .map(|g| {
                let sum: f64 = w
                    .members(g)
                    .map(|j| w.gamma[j] * (w.nu[j] * symbols[j] + w.theta_bar[j]))
                    .sum();
                c(sum, 0.0)
            })
            .collect())
    }
}

/// Aggregation schemes selectable by name.
#[derive(Debug, Clone, Default)]
pub struct SchemeRegistry {
    schemes: BTreeMap<&'static str, Arc<dyn AggregationScheme>>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `level1`, `level2`, `level3`, `cellular` and `errorfree`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Level1));
        r.register(Arc::new(Level2));
        r.register(Arc::new(Level3));
        r.register(Arc::new(Cellular));
        r.register(Arc::new(ErrorFree));
        r
    }

    /// Replaces any scheme already registered under the same name.
    pub fn register(&mut self, scheme: Arc<dyn AggregationScheme>) {
        self.schemes.insert(scheme.name(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn AggregationScheme>, AggregationError> {
        self.schemes
            .get(name)
            .cloned()
            .ok_or_else(|| AggregationError::UnknownScheme(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.schemes.keys().copied()
    }
}
