//! Mesh bundle persistence: a JSON header plus flat binary arrays.
//!
//! A bundle directory holds `header.json` (dims, thresholds, provenance,
//! counts, controllers, profile, integrator settings), `states.f64le`
//! (little-endian doubles, n_states × dim, failure sentinel row included)
//! and `transitions.u32le` (little-endian u32, (n_states−1) × controllers ×
//! disturbances). Bytes are reproducible for identical configs; a SHA-256
//! digest over the content is stored in the header and re-checked on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DeterministicTransitionTable, MeshBuild};
use crate::dynamics::{DisturbanceProfile, FailureCause, ModelSpec, PolicySpec, SimConfig};
use crate::error::{Error, Result};
use crate::geometry::{Mesh, PoincareState, Provenance};

pub const HEADER_FILE: &str = "header.json";
pub const STATES_FILE: &str = "states.f64le";
pub const TRANSITIONS_FILE: &str = "transitions.u32le";

/// Everything a persisted mesh build carries.
#[derive(Debug, Clone)]
pub struct MeshBundle {
    pub model: ModelSpec,
    pub mesh: Mesh,
    pub table: DeterministicTransitionTable,
    pub controllers: Vec<PolicySpec>,
    pub profile: DisturbanceProfile,
    pub sim_config: SimConfig,
    pub truncated: bool,
    pub failure_tally: BTreeMap<FailureCause, u64>,
    pub simulations: u64,
}

impl MeshBundle {
    pub fn from_build(
        build: MeshBuild,
        model: ModelSpec,
        controllers: Vec<PolicySpec>,
        profile: DisturbanceProfile,
        sim_config: SimConfig,
    ) -> Self {
        Self {
            model,
            mesh: build.mesh,
            table: build.table,
            controllers,
            profile,
            sim_config,
            truncated: build.truncated,
            failure_tally: build.failure_tally,
            simulations: build.simulations,
        }
    }

    /// Content digest covering the binary arrays and identifying header
    /// fields; embedded in downstream analysis outputs.
    pub fn digest(&self) -> String {
        digest_content(
            &state_bytes(&self.mesh),
            &transition_bytes(&self.table),
            &self.mesh.provenance().digest(),
            self.mesh.dim(),
            self.mesh.d_tr(),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelSpec,
    provenance: Provenance,
    provenance_digest: String,
    bundle_digest: String,
    dim: usize,
    d_tr: f64,
    weights: Option<Vec<f64>>,
    n_states: usize,
    n_controllers: usize,
    n_disturbances: usize,
    truncated: bool,
    failure_tally: BTreeMap<FailureCause, u64>,
    simulations: u64,
    controllers: Vec<PolicySpec>,
    profile: DisturbanceProfile,
    sim_config: SimConfig,
}

fn state_bytes(mesh: &Mesh) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(mesh.len() * mesh.dim() * 8);
    for i in 0..mesh.len() {
        for c in mesh.state(i).coords() {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    bytes
}

fn transition_bytes(table: &DeterministicTransitionTable) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(table.raw_entries().len() * 4);
    for e in table.raw_entries() {
        bytes.extend_from_slice(&e.to_le_bytes());
    }
    bytes
}

fn digest_content(
    states: &[u8],
    transitions: &[u8],
    provenance_digest: &str,
    dim: usize,
    d_tr: f64,
) -> String {
    let mut h = Sha256::new();
    h.update(provenance_digest.as_bytes());
    h.update((dim as u64).to_le_bytes());
    h.update(d_tr.to_bits().to_le_bytes());
    h.update((states.len() as u64).to_le_bytes());
    h.update(states);
    h.update((transitions.len() as u64).to_le_bytes());
    h.update(transitions);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the bundle directory, creating it if needed. Byte-reproducible
/// for identical inputs.
pub fn save_bundle(dir: &Path, bundle: &MeshBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    let states = state_bytes(&bundle.mesh);
    let transitions = transition_bytes(&bundle.table);
    let header = Header {
        format_version: 1,
        model: bundle.model.clone(),
        provenance: bundle.mesh.provenance().clone(),
        provenance_digest: bundle.mesh.provenance().digest(),
        bundle_digest: digest_content(
            &states,
            &transitions,
            &bundle.mesh.provenance().digest(),
            bundle.mesh.dim(),
            bundle.mesh.d_tr(),
        ),
        dim: bundle.mesh.dim(),
        d_tr: bundle.mesh.d_tr(),
        weights: bundle.mesh.weights().map(|w| w.to_vec()),
        n_states: bundle.mesh.len(),
        n_controllers: bundle.table.n_controllers(),
        n_disturbances: bundle.table.n_disturbances(),
        truncated: bundle.truncated,
        failure_tally: bundle.failure_tally.clone(),
        simulations: bundle.simulations,
        controllers: bundle.controllers.clone(),
        profile: bundle.profile.clone(),
        sim_config: bundle.sim_config.clone(),
    };
    let mut header_json = serde_json::to_string_pretty(&header)?;
    header_json.push('\n');
    fs::write(dir.join(HEADER_FILE), header_json)?;
    fs::write(dir.join(STATES_FILE), states)?;
    fs::write(dir.join(TRANSITIONS_FILE), transitions)?;
    Ok(())
}

/// Loads and integrity-checks a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<MeshBundle> {
    let header: Header = serde_json::from_str(&fs::read_to_string(dir.join(HEADER_FILE))?)?;
    let states_raw = fs::read(dir.join(STATES_FILE))?;
    let transitions_raw = fs::read(dir.join(TRANSITIONS_FILE))?;

    let expect = digest_content(
        &states_raw,
        &transitions_raw,
        &header.provenance.digest(),
        header.dim,
        header.d_tr,
    );
    if expect != header.bundle_digest {
        return Err(Error::InvalidInput(format!(
            "bundle digest mismatch: header says {}, content is {}",
            header.bundle_digest, expect
        )));
    }

    if states_raw.len() != header.n_states * header.dim * 8 {
        return Err(Error::InvalidInput(format!(
            "state array is {} bytes, expected {}",
            states_raw.len(),
            header.n_states * header.dim * 8
        )));
    }
    let mut states = Vec::with_capacity(header.n_states);
    for chunk in states_raw.chunks_exact(header.dim * 8) {
        let coords: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        states.push(PoincareState::new(coords)?);
    }
    let mesh = Mesh::from_parts(states, header.d_tr, header.weights.clone(), header.provenance)?;

    if transitions_raw.len() % 4 != 0 {
        return Err(Error::InvalidInput(
            "transition array length not a multiple of 4".into(),
        ));
    }
    let entries: Vec<u32> = transitions_raw
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let table = DeterministicTransitionTable::from_entries(
        header.n_states,
        header.n_controllers,
        header.n_disturbances,
        entries,
    )?;

    Ok(MeshBundle {
        model: header.model,
        mesh,
        table,
        controllers: header.controllers,
        profile: header.profile,
        sim_config: header.sim_config,
        truncated: header.truncated,
        failure_tally: header.failure_tally,
        simulations: header.simulations,
    })
}

/// One row per state: index, then coordinates.
pub fn write_states_csv<W: Write>(mesh: &Mesh, mut w: W) -> Result<()> {
    write!(w, "index")?;
    for k in 0..mesh.dim() {
        write!(w, ",x{k}")?;
    }
    writeln!(w)?;
    for i in 0..mesh.len() {
        write!(w, "{i}")?;
        for c in mesh.state(i).coords() {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One row per table entry: state, controller, disturbance, successor.
/// Unset entries (truncated builds) render as empty successors.
pub fn write_transitions_csv<W: Write>(
    table: &DeterministicTransitionTable,
    mut w: W,
) -> Result<()> {
    writeln!(w, "state,controller,disturbance,successor")?;
    for s in 1..table.n_states() {
        for c in 0..table.n_controllers() {
            for d in 0..table.n_disturbances() {
                match table.get(s, c, d) {
                    Some(succ) => writeln!(w, "{s},{c},{d},{succ}")?,
                    None => writeln!(w, "{s},{c},{d},")?,
                }
            }
        }
    }
    Ok(())
}
