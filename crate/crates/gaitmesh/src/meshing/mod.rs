//! Worklist exploration of the reachable Poincaré state space.
//!
//! Starting from one seed state, every (controller × disturbance)
//! combination is simulated for each mesh state in FIFO order. A successful
//! step either lumps onto an existing mesh state (nearest neighbor within
//! d_tr) or appends a new one; failures transition to the absorbing index 0.
//! The loop nest order — states, then controllers, then disturbances in
//! declared order — fixes mesh indices deterministically.
//!
//! Simulations for one worklist state's grid may run on many threads, but
//! results are committed strictly in declared order against the mesh as it
//! exists at commit time, so the output is bit-identical for any worker
//! count.

mod bundle;

pub use bundle::{load_bundle, save_bundle, write_states_csv, write_transitions_csv, MeshBundle};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    CycleResult, Disturbance, DisturbanceProfile, ExternalPolicyPool, FailureCause, Model,
    PolicyKind, PolicyRuntime, PolicySpec, SimConfig, SimulationOutcome,
};
use crate::error::{Error, Result};
use crate::geometry::{distance_to_mesh, Mesh, PoincareState, Provenance};

const UNSET: u32 = u32::MAX;

/// Dense map (state, controller, disturbance) → successor state index.
///
/// Rows exist for every non-failure state; index 0 as a successor means the
/// transition failed. Unset entries only occur in truncated builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicTransitionTable {
    n_states: usize,
    n_controllers: usize,
    n_disturbances: usize,
    entries: Vec<u32>,
}

impl DeterministicTransitionTable {
    pub fn new(n_states: usize, n_controllers: usize, n_disturbances: usize) -> Self {
        let rows = n_states.saturating_sub(1);
        Self {
            n_states,
            n_controllers,
            n_disturbances,
            entries: vec![UNSET; rows * n_controllers * n_disturbances],
        }
    }

    /// Rebuilds a table from a raw entry array (bundle loading).
    pub fn from_entries(
        n_states: usize,
        n_controllers: usize,
        n_disturbances: usize,
        entries: Vec<u32>,
    ) -> Result<Self> {
        let expect = n_states.saturating_sub(1) * n_controllers * n_disturbances;
        if entries.len() != expect {
            return Err(Error::InvalidInput(format!(
                "transition array has {} entries, expected {}",
                entries.len(),
                expect
            )));
        }
        if entries
            .iter()
            .any(|&e| e != UNSET && e as usize >= n_states)
        {
            return Err(Error::InvalidInput(
                "transition entry out of range".into(),
            ));
        }
        Ok(Self {
            n_states,
            n_controllers,
            n_disturbances,
            entries,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_controllers(&self) -> usize {
        self.n_controllers
    }

    pub fn n_disturbances(&self) -> usize {
        self.n_disturbances
    }

    fn offset(&self, state: usize, controller: usize, disturbance: usize) -> usize {
        debug_assert!(state >= 1 && state < self.n_states);
        debug_assert!(controller < self.n_controllers);
        debug_assert!(disturbance < self.n_disturbances);
        (state - 1) * self.n_controllers * self.n_disturbances
            + controller * self.n_disturbances
            + disturbance
    }

    /// Successor of a (state ≥ 1, controller, disturbance) triple, `None`
    /// when the entry was never filled (truncated build).
    pub fn get(&self, state: usize, controller: usize, disturbance: usize) -> Option<usize> {
        let e = self.entries[self.offset(state, controller, disturbance)];
        (e != UNSET).then_some(e as usize)
    }

    pub fn set(&mut self, state: usize, controller: usize, disturbance: usize, succ: usize) {
        let off = self.offset(state, controller, disturbance);
        self.entries[off] = succ as u32;
    }

    /// Extends the table with one fresh (unset) row for a newly added state.
    fn push_state(&mut self) {
        self.n_states += 1;
        self.entries
            .extend(std::iter::repeat(UNSET).take(self.n_controllers * self.n_disturbances));
    }

    /// True when every row of every explored state is filled.
    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(|&e| e != UNSET)
    }

    pub fn raw_entries(&self) -> &[u32] {
        &self.entries
    }
}

fn default_state_cap() -> usize {
    1_000_000
}

/// Knobs for mesh construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildOptions {
    /// Exploration stops (flagged, not an error) at this many non-failure states.
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
    /// Worker threads for the simulation fan-out; `None` uses the rayon default.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Per-coordinate metric weights for the lumping distance.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Seeds recorded in the mesh provenance.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            state_cap: default_state_cap(),
            threads: None,
            weights: None,
            seeds: Vec::new(),
        }
    }
}

/// Output of [`build_mesh`]: the mesh, the deterministic transition table,
/// and build accounting.
#[derive(Debug, Clone)]
pub struct MeshBuild {
    pub mesh: Mesh,
    pub table: DeterministicTransitionTable,
    /// True when the state cap stopped exploration early; unexplored rows
    /// stay unset and the result is a partial reachability picture.
    pub truncated: bool,
    /// Failure transitions recorded, by cause.
    pub failure_tally: BTreeMap<FailureCause, u64>,
    /// Total gait-cycle simulations performed.
    pub simulations: u64,
}

/// Per-controller simulation dispatch, with pooled connections for external
/// policies so parallel workers never share one.
enum ControllerHandle {
    Fresh(PolicySpec),
    Pooled {
        spec: PolicySpec,
        pool: ExternalPolicyPool,
    },
}

impl ControllerHandle {
    fn new(spec: &PolicySpec) -> Self {
        match &spec.kind {
            PolicyKind::External {
                endpoint,
                deadline_ms,
            } => Self::Pooled {
                spec: spec.clone(),
                pool: ExternalPolicyPool::new(
                    endpoint.clone(),
                    std::time::Duration::from_millis(*deadline_ms),
                ),
            },
            _ => Self::Fresh(spec.clone()),
        }
    }

    fn simulate(
        &self,
        model: &Model,
        x0: &PoincareState,
        gamma: &Disturbance,
        cfg: &SimConfig,
    ) -> Result<SimulationOutcome> {
        match self {
            Self::Fresh(spec) => {
                let mut runtime = PolicyRuntime::connect(spec)?;
                model.simulate_cycle(x0, &mut runtime, spec.torque_limit, gamma, cfg)
            }
            Self::Pooled { spec, pool } => {
                let mut lease = pool.lease()?;
                let mut runtime = PolicyRuntime::External(lease.take_client());
                let out =
                    model.simulate_cycle(x0, &mut runtime, spec.torque_limit, gamma, cfg);
                if let PolicyRuntime::External(client) = runtime {
                    lease.put_back(client);
                }
                out
            }
        }
    }
}

/// Faithful worklist implementation of the meshing algorithm.
///
/// For each state in FIFO order, each controller, each disturbance: simulate
/// one gait cycle; record a transition to 0 on failure; otherwise lump onto
/// the nearest mesh state within d_tr or append a new state. Integration
/// failures become failure transitions and are tallied by cause; protocol
/// and configuration errors abort the build.
pub fn build_mesh(
    initial: &PoincareState,
    controllers: &[PolicySpec],
    profile: &DisturbanceProfile,
    d_tr: f64,
    model: &Model,
    sim_config: &SimConfig,
    options: &BuildOptions,
) -> Result<MeshBuild> {
    if controllers.is_empty() {
        return Err(Error::InvalidInput("no controllers given".into()));
    }
    profile.validate()?;
    sim_config.validate()?;
    for c in controllers {
        c.validate()?;
    }
    if initial.dim() != model.section_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.section_dim(),
            got: initial.dim(),
        });
    }
    if options.state_cap < 1 {
        return Err(Error::InvalidInput("state_cap must be >= 1".into()));
    }

    let provenance = Provenance {
        model_id: model.id().into(),
        policy_id: controllers
            .iter()
            .map(|c| c.id.as_str())
            .collect::<Vec<_>>()
            .join("+"),
        profile_id: profile.id.clone(),
        seeds: options.seeds.clone(),
    };
    let mut mesh = Mesh::with_initial(
        initial.clone(),
        d_tr,
        options.weights.clone(),
        provenance,
    )?;
    let mut table = DeterministicTransitionTable::new(2, controllers.len(), profile.len());

    let handles: Vec<ControllerHandle> = controllers.iter().map(ControllerHandle::new).collect();
    let grid: Vec<(usize, usize)> = (0..controllers.len())
        .flat_map(|c| (0..profile.len()).map(move |d| (c, d)))
        .collect();

    let pool = match options.threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?,
        ),
        None => None,
    };

    let mut truncated = false;
    let mut failure_tally: BTreeMap<FailureCause, u64> = BTreeMap::new();
    let mut simulations = 0u64;
    let mut cur = 1usize;

    while cur < mesh.len() {
        if mesh.len() - 1 > options.state_cap {
            truncated = true;
            break;
        }
        let x = mesh.state(cur).clone();
        let run = || -> Vec<Result<SimulationOutcome>> {
            grid.par_iter()
                .map(|&(c, d)| {
                    handles[c].simulate(model, &x, &profile.disturbances[d], sim_config)
                })
                .collect()
        };
        let outcomes = match &pool {
            Some(p) => p.install(run),
            None => run(),
        };
        simulations += outcomes.len() as u64;

        // Commit in declared order; lumping sees states appended earlier in
        // this same grid.
        for (&(c, d), outcome) in grid.iter().zip(outcomes) {
            let out = outcome?;
            match out.result {
                CycleResult::Failure(cause) => {
                    *failure_tally.entry(cause).or_insert(0) += 1;
                    table.set(cur, c, d, 0);
                }
                CycleResult::Step(next) => {
                    let (d_min, argmin) = distance_to_mesh(&next, &mesh)?;
                    if d_min > d_tr {
                        let idx = mesh.append_with_distance(next, d_min);
                        table.push_state();
                        table.set(cur, c, d, idx);
                    } else {
                        table.set(cur, c, d, argmin);
                    }
                }
            }
        }
        cur += 1;
    }

    Ok(MeshBuild {
        mesh,
        table,
        truncated,
        failure_tally,
        simulations,
    })
}

/// Builds one mesh per threshold and reports (d_tr, N) pairs, N counting
/// non-failure states. Per-threshold failures land in the result slot
/// without aborting the sweep.
pub fn mesh_growth_sweep(
    initial: &PoincareState,
    controllers: &[PolicySpec],
    profile: &DisturbanceProfile,
    d_tr_list: &[f64],
    model: &Model,
    sim_config: &SimConfig,
    options: &BuildOptions,
) -> Result<Vec<(f64, Result<usize>)>> {
    if d_tr_list.is_empty() {
        return Err(Error::InvalidInput("no thresholds given".into()));
    }
    for (i, a) in d_tr_list.iter().enumerate() {
        if !(*a > 0.0) {
            return Err(Error::InvalidInput("thresholds must be positive".into()));
        }
        if d_tr_list[..i].iter().any(|b| a == b) {
            return Err(Error::InvalidInput("thresholds must be distinct".into()));
        }
    }
    Ok(d_tr_list
        .iter()
        .map(|&d_tr| {
            let n = build_mesh(initial, controllers, profile, d_tr, model, sim_config, options)
                .map(|b| b.mesh.len() - 1);
            (d_tr, n)
        })
        .collect())
}

/// Lumps an observed state sequence with the meshing insertion rule, without
/// exploring: the convenience path behind trajectory visualizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLump {
    pub mesh: Mesh,
    /// Mesh index assigned to each input state, in input order.
    pub assignments: Vec<usize>,
    /// Visits per mesh index (index 0 never receives visits).
    pub visit_counts: Vec<u64>,
}

pub fn lump_trajectory(
    states: &[PoincareState],
    d_tr: f64,
    weights: Option<Vec<f64>>,
    provenance: Provenance,
) -> Result<TrajectoryLump> {
    let first = states
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let mut mesh = Mesh::with_initial(first.clone(), d_tr, weights, provenance)?;
    let mut assignments = vec![1usize];
    for s in &states[1..] {
        let (d_min, argmin) = distance_to_mesh(s, &mesh)?;
        if d_min > d_tr {
            let idx = mesh.append_with_distance(s.clone(), d_min);
            assignments.push(idx);
        } else {
            assignments.push(argmin);
        }
    }
    let mut visit_counts = vec![0u64; mesh.len()];
    for &a in &assignments {
        visit_counts[a] += 1;
    }
    Ok(TrajectoryLump {
        mesh,
        assignments,
        visit_counts,
    })
}
