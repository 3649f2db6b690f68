//! The subcommands. Every run writes its report to `<out>/report-<command>.json`.

use crate::config::{
    Binding, DataBlock, DataMethod, NetworkBlock, RunConfig, TransformName, VariantBlock,
};
use crate::error::{CliError, CliResult};
use crate::problem::{decomposition, parse_face, schedule, BoxSetup, Decomposition};
use crate::report::{DatasetEntry, MetricsReport, RunEntry, TrainEntry};
use crate::vtk::{to_vtk, validate_vtk};
use ddonet::ddm::{assemble, run_ddm, run_iteration_free, DdmResult, Scheme, SubdomainSolver};
use ddonet::geometry::{AxisBox, Face, ShapeParams};
use ddonet::gp::{GpSampler, GpSpec};
use ddonet::grid::{restrict, Field, StructuredGrid};
use ddonet::metrics::{mae, ml2re};
use ddonet::neuralop::{
    load_checkpoint, preset, save_checkpoint, train, Architecture, Checkpoint, CheckpointMeta,
    Fusion, OperatorNet, OperatorSample, TrainConfig,
};
use ddonet::oracle::{BcData, BcKind, FdSolver, LinearSolverOptions};
use ddonet::pipeline::{
    gen_dataset_gp, gen_dataset_interpolation, grid_trunk, mix_seed, read_f64,
    resistance_experiment, sample_shapes, transform_targets, write_f64, Dataset, GpDataSpec,
    GpFace, Manifest, ResistanceBinding, ResistanceSetup, SubdomainCut, TraceKind, Transform,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

const DATA: u64 = 1;
const SPLIT: u64 = 2;
const INIT: u64 = 3;
const TRAIN: u64 = 4;
const SHAPES: u64 = 5;

/// A parsed configuration with the command-line overrides applied.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: RunConfig, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        Run {
            seed: seed.unwrap_or(config.output.seed),
            out: out.unwrap_or_else(|| config.output.dir.clone()),
            config,
        }
    }

    fn stream(&self, stream: u64, k: u64) -> u64 {
        mix_seed(mix_seed(self.seed, stream), k)
    }

    pub fn data_dir(&self, label: &str) -> PathBuf {
        self.out.join("data").join(label)
    }

    fn checkpoint_path(&self, label: &str) -> PathBuf {
        self.out.join("checkpoints").join(format!("{label}.ddon"))
    }

    fn data_block(&self) -> CliResult<&DataBlock> {
        self.config
            .data
            .as_ref()
            .ok_or_else(|| CliError::config("this command needs a [data] table"))
    }

    fn network_block(&self) -> CliResult<&NetworkBlock> {
        self.config
            .network
            .as_ref()
            .ok_or_else(|| CliError::config("this command needs a [network] table"))
    }

    fn gp_faces(&self) -> CliResult<Vec<Face>> {
        let d = self.config.geometry.lo.as_ref().map_or(3, Vec::len);
        match &self.config.data {
            Some(data) => data.gp_faces.iter().map(|f| parse_face(f, d)).collect(),
            None => Ok(Vec::new()),
        }
    }

    fn setup(&self, variant: Option<&VariantBlock>) -> CliResult<BoxSetup> {
        BoxSetup::new(
            &self.config.geometry,
            &decomposition(&self.config.geometry, variant),
        )
    }

    /// Labels of the datasets and nets this configuration uses.
    pub fn labels(&self) -> CliResult<Vec<String>> {
        let setup = self.setup(None)?;
        let mut labels: Vec<String> = setup.subs.iter().map(|s| s.label.clone()).collect();
        let whole = labels.len() == 1 && labels[0] == "global";
        if self.config.data.as_ref().is_some_and(|d| d.global) && !whole {
            labels.push("global".into());
        }
        Ok(labels)
    }

    fn save_report(&self, report: &mut MetricsReport) -> CliResult<()> {
        report.finish();
        let path = self.out.join(format!("report-{}.json", report.command));
        write(&path, report.to_json().as_bytes())
    }
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn gp_spec(data: &DataBlock) -> GpSpec {
    GpSpec {
        correlation_length: data.gp.correlation_length,
        variance: data.gp.variance,
        jitter: data.gp.jitter,
        seed: 0,
    }
}

fn trace_kind(kind: BcKind) -> TraceKind {
    match kind {
        BcKind::Dirichlet => TraceKind::Value,
        k => {
            let (weight, conductivity) = k.coefficients();
            TraceKind::Robin {
                weight,
                conductivity,
            }
        }
    }
}

/// GP data on `gp` faces of the whole box.
fn global_gp_dataset(
    setup: &BoxSetup,
    gp: &[Face],
    data: &DataBlock,
    count: usize,
    seed: u64,
) -> CliResult<Dataset> {
    let spec = GpDataSpec {
        problem: setup.sub_problem(&whole_sub(setup), gp, false),
        gp_faces: gp
            .iter()
            .map(|&f| GpFace {
                patch: setup.domain.face_patch(f),
                kind: setup.physical_kind(f),
            })
            .collect(),
        grid_n: setup.n.clone(),
        gp: gp_spec(data),
        fixed_inputs: None,
    };
    Ok(gen_dataset_gp(&spec, count, seed)?)
}

fn whole_sub(setup: &BoxSetup) -> crate::problem::Sub {
    crate::problem::Sub {
        label: "global".into(),
        bx: setup.domain,
        n: setup.n.clone(),
        physical: Face::all(setup.dim()),
        open: Vec::new(),
    }
}

/// Restricts every target field of `whole` to `bx`, keeping the branches.
fn restrict_dataset(
    whole: &Dataset,
    global: &StructuredGrid,
    bx: &AxisBox,
    n: &[usize],
) -> CliResult<Dataset> {
    let trunk = grid_trunk(&StructuredGrid::new(*bx, n)?);
    let samples = whole
        .samples
        .iter()
        .map(|s| {
            let f = restrict(&Field::new(global.clone(), s.targets.clone())?, bx, n)?;
            Ok(OperatorSample {
                branch_inputs: s.branch_inputs.clone(),
                trunk: trunk.clone(),
                targets: f.values,
            })
        })
        .collect::<ddonet::Result<Vec<_>>>()?;
    let mut m = whole.manifest.clone();
    m.generator = "restriction".into();
    m.domain = *bx;
    m.parents = vec![whole.fingerprint().to_string()];
    m.details = serde_json::json!({ "box": bx, "grid_n": n });
    Ok(Dataset::new(samples, m)?)
}

fn apply_transforms(mut ds: Dataset, names: &[TransformName]) -> CliResult<Dataset> {
    for name in names {
        let t = match name {
            TransformName::Log10Shift => Transform::log10_shift(),
            TransformName::Log10 => Transform::log10(),
            TransformName::Zscore => {
                let rows: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.targets.clone()).collect();
                Transform::fit_zscore(&rows)?
            }
        };
        ds = transform_targets(&ds, &t)?;
    }
    Ok(ds)
}

fn sample_count(run: &Run, data: &DataBlock) -> CliResult<usize> {
    if let Some(c) = data.count {
        return Ok(c);
    }
    run.config
        .network
        .as_ref()
        .and_then(|n| n.preset.as_deref())
        .and_then(preset)
        .map(|p| p.samples)
        .ok_or_else(|| CliError::config("data.count is required without a network preset"))
}

pub fn gen_data(run: &Run) -> CliResult<MetricsReport> {
    if run.config.geometry.shapes.is_some() {
        return Err(CliError::config("gen-data supports box geometries only"));
    }
    let data = run.data_block()?;
    let count = sample_count(run, data)?;
    let setup = run.setup(None)?;
    let (scheme, sched) = schedule(&run.config.solver, None);
    let gp = run.gp_faces()?;
    let seed = run.stream(DATA, 0);
    let mut report = MetricsReport::new("gen-data", run.seed);
    let t0 = Instant::now();
    let global_grid = StructuredGrid::new(setup.domain, &setup.n)?;
    let whole = setup.subs.len() == 1 && setup.subs[0].label == "global";
    let mut out: Vec<(String, Dataset)> = Vec::new();

    if scheme == Scheme::IterationFree {
        let all = global_gp_dataset(&setup, &gp, data, count, seed)?;
        for s in &setup.subs {
            out.push((
                s.label.clone(),
                restrict_dataset(&all, &global_grid, &s.bx, &s.n)?,
            ));
        }
        if data.global && !whole {
            out.push(("global".into(), all));
        }
    } else {
        match data.method {
            DataMethod::Gp => {
                for (i, s) in setup.subs.iter().enumerate() {
                    let mine = setup.gp_faces_of(s, &gp);
                    let mut faces: Vec<GpFace> = mine
                        .iter()
                        .map(|&f| GpFace {
                            patch: s.bx.face_patch(f),
                            kind: setup.physical_kind(f),
                        })
                        .collect();
                    for (&f, kind) in s.open.iter().zip(setup.slot_kinds(i, scheme, &sched)) {
                        faces.push(GpFace {
                            patch: s.bx.face_patch(f),
                            kind,
                        });
                    }
                    let spec = GpDataSpec {
                        problem: setup.sub_problem(s, &mine, false),
                        gp_faces: faces,
                        grid_n: s.n.clone(),
                        gp: gp_spec(data),
                        fixed_inputs: None,
                    };
                    out.push((
                        s.label.clone(),
                        gen_dataset_gp(&spec, count, mix_seed(seed, i as u64))?,
                    ));
                }
            }
            DataMethod::Interpolation => {
                let samplers = gp
                    .iter()
                    .enumerate()
                    .map(|(k, &f)| {
                        let pts: Vec<_> = global_grid
                            .face_nodes(f)
                            .iter()
                            .map(|&n| global_grid.point(n))
                            .collect();
                        let mut spec = gp_spec(data);
                        spec.seed = mix_seed(seed, k as u64);
                        GpSampler::new(&spec, &pts)
                    })
                    .collect::<ddonet::Result<Vec<_>>>()?;
                let base = setup.global_problem();
                let problems = |i: usize| {
                    let mut p = base.clone();
                    for (f, sampler) in gp.iter().zip(&samplers) {
                        let bc = p.bcs.iter_mut().find(|bc| bc.patch.face == *f).unwrap();
                        bc.data = BcData::Nodal(sampler.draw(i as u64));
                    }
                    Ok(p)
                };
                let cuts: Vec<SubdomainCut> = setup
                    .subs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let mut sensors: Vec<_> = setup
                            .gp_faces_of(s, &gp)
                            .iter()
                            .map(|&f| (s.bx.face_patch(f), trace_kind(setup.physical_kind(f))))
                            .collect();
                        for (&f, kind) in s.open.iter().zip(setup.slot_kinds(i, scheme, &sched)) {
                            sensors.push((s.bx.face_patch(f), trace_kind(kind)));
                        }
                        SubdomainCut {
                            label: s.label.clone(),
                            bx: s.bx,
                            grid_n: s.n.clone(),
                            sensors,
                        }
                    })
                    .collect();
                let sets = gen_dataset_interpolation(problems, &setup.n, &cuts, count, seed)?;
                out.extend(setup.subs.iter().map(|s| s.label.clone()).zip(sets));
            }
        }
        if data.global && !whole {
            out.push((
                "global".into(),
                global_gp_dataset(&setup, &gp, data, count, mix_seed(seed, 1 << 32))?,
            ));
        }
    }
    report.phase("data", t0.elapsed().as_secs_f64());
    for (label, ds) in out {
        let ds = apply_transforms(ds, &data.transforms)?;
        ds.save(&run.data_dir(&label))?;
        println!("{label} {}", ds.fingerprint());
        report.datasets.push(DatasetEntry {
            label,
            count: ds.len(),
            fingerprint: ds.fingerprint().to_string(),
        });
    }
    run.save_report(&mut report)?;
    Ok(report)
}

/// Architecture for data of the given widths.
pub fn architecture(net: &NetworkBlock, manifest: &Manifest) -> CliResult<Architecture> {
    let widths = &manifest.branch_widths;
    if let Some(name) = &net.preset {
        let mut arch = preset(name).expect("checked at parse time").architecture;
        if arch.branches.len() != widths.len() {
            return Err(CliError::Core(ddonet::Error::Shape(format!(
                "preset `{name}` has {} branches, the data has {}",
                arch.branches.len(),
                widths.len()
            ))));
        }
        if let Some(p) = net.latent_dim {
            if p != arch.latent_dim() {
                return Err(CliError::config(format!(
                    "network.latent_dim {p} differs from preset `{name}` ({})",
                    arch.latent_dim()
                )));
            }
        }
        for (b, &w) in arch.branches.iter_mut().zip(widths) {
            b[0] = w;
        }
        arch.trunk[0] = manifest.trunk_dim;
        if let Some(f) = net.fusion {
            arch.fusion = f;
        }
        return Ok(arch);
    }
    let hidden = net.hidden.clone().unwrap_or_default();
    let p = net.latent_dim.unwrap_or(1);
    let layers = |input: usize| -> Vec<usize> {
        std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(p))
            .collect()
    };
    let arch = Architecture {
        branches: widths.iter().map(|&w| layers(w)).collect(),
        trunk: layers(manifest.trunk_dim),
        fusion: net.fusion.unwrap_or(Fusion::Product),
    };
    arch.validate()?;
    Ok(arch)
}

pub fn train_config(run: &Run, net: &NetworkBlock, k: u64) -> CliResult<TrainConfig> {
    let t = &net.train;
    let iterations = t
        .iterations
        .or_else(|| net.preset.as_deref().and_then(preset).map(|p| p.iterations))
        .ok_or_else(|| CliError::config("network.train.iterations is required without a preset"))?;
    let cfg = TrainConfig {
        batch_size: t.batch_size,
        lr_init: t.lr_init,
        lr_decay_per_step: t.lr_decay_per_step,
        iterations,
        seed: run.stream(TRAIN, k),
        points_per_step: t.points_per_step,
        log_every: t.log_every,
        loss: t.loss,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Initialization of the `k`-th net of a run.
pub fn initial_net(run: &Run, k: usize, arch: &Architecture) -> CliResult<OperatorNet> {
    Ok(OperatorNet::new(
        arch,
        &mut ChaCha8Rng::seed_from_u64(run.stream(INIT, k as u64)),
    )?)
}

pub fn train_cmd(run: &Run) -> CliResult<MetricsReport> {
    let net_block = run.network_block()?;
    let data = run.data_block()?;
    let mut report = MetricsReport::new("train", run.seed);
    for (k, label) in run.labels()?.iter().enumerate() {
        let dir = run.data_dir(label);
        if !dir.join("manifest.json").exists() {
            return Err(CliError::config(format!(
                "no dataset for `{label}` under {}; run gen-data first",
                dir.display()
            )));
        }
        let ds = Dataset::load(&dir)?;
        let parts = ds.split_fractions(&data.split, run.stream(SPLIT, k as u64))?;
        let test: &[OperatorSample] = parts.get(1).map_or(&[], |p| &p.samples);
        let arch = architecture(net_block, &ds.manifest)?;
        let mut net = initial_net(run, k, &arch)?;
        let cfg = train_config(run, net_block, k as u64)?;
        let t0 = Instant::now();
        let outcome = train(&mut net, &parts[0].samples, test, &cfg)?;
        report.phase(&format!("train:{label}"), t0.elapsed().as_secs_f64());
        let mut extra = BTreeMap::new();
        extra.insert("label".to_string(), serde_json::json!(label));
        extra.insert(
            "transforms".to_string(),
            serde_json::to_value(&ds.manifest.transforms)?,
        );
        let ckpt = Checkpoint {
            meta: CheckpointMeta {
                seed: run.seed,
                train: Some(cfg.clone()),
                dataset_fingerprint: Some(ds.fingerprint().to_string()),
                extra,
            },
            net,
        };
        let path = run.checkpoint_path(label);
        let dir = path.parent().unwrap();
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        save_checkpoint(&ckpt, &path)?;
        write(
            &run.out.join("train").join(format!("{label}.json")),
            serde_json::to_string_pretty(&outcome.history)?.as_bytes(),
        )?;
        println!(
            "{label}: {} params, train {:.4e}, test {}",
            ckpt.net.n_params(),
            outcome.final_train,
            outcome
                .final_test
                .map_or("-".into(), |t| format!("{t:.4e}"))
        );
        report.training.push(TrainEntry {
            label: label.clone(),
            params: ckpt.net.n_params(),
            steps: cfg.iterations,
            final_train: outcome.final_train,
            final_test: outcome.final_test,
        });
    }
    run.save_report(&mut report)?;
    Ok(report)
}

pub fn load_net(run: &Run, label: &str) -> CliResult<Arc<OperatorNet>> {
    let path = run.checkpoint_path(label);
    if !path.exists() {
        return Err(CliError::CheckpointNotFound(path));
    }
    let ckpt = load_checkpoint(&path)?;
    let transformed = ckpt
        .meta
        .extra
        .get("transforms")
        .and_then(|t| t.as_array())
        .is_some_and(|a| !a.is_empty());
    if transformed {
        return Err(CliError::Core(ddonet::Error::Precondition(format!(
            "net `{label}` was trained on transformed targets and cannot be coupled"
        ))));
    }
    Ok(Arc::new(ckpt.net))
}

fn nets_for(run: &Run, labels: &[String]) -> CliResult<BTreeMap<String, Arc<OperatorNet>>> {
    labels
        .iter()
        .map(|l| Ok((l.clone(), load_net(run, l)?)))
        .collect()
}

/// Index entry of a saved field.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FieldEntry {
    label: String,
    bx: AxisBox,
    counts: Vec<usize>,
}

fn save_fields(run: &Run, fields: &[(String, Field)]) -> CliResult<()> {
    let dir = run.out.join("fields");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut index = Vec::new();
    for (label, f) in fields {
        write_f64(
            &dir.join(format!("{label}.ddat")),
            &[f.values.len()],
            &f.values,
        )?;
        index.push(FieldEntry {
            label: label.clone(),
            bx: *f.grid.bx(),
            counts: f.grid.counts().to_vec(),
        });
    }
    write(
        &dir.join("index.json"),
        serde_json::to_string_pretty(&index)?.as_bytes(),
    )
}

fn load_fields(run: &Run) -> CliResult<Vec<(String, Field)>> {
    let dir = run.out.join("fields");
    let path = dir.join("index.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let index: Vec<FieldEntry> = serde_json::from_str(&text)?;
    index
        .into_iter()
        .map(|e| {
            let (_, values) = read_f64(&dir.join(format!("{}.ddat", e.label)))?;
            Ok((
                e.label,
                Field::new(StructuredGrid::new(e.bx, &e.counts)?, values)?,
            ))
        })
        .collect()
}

fn write_vtk(run: &Run, fields: &[(String, Field)]) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (label, f) in fields {
        let text = to_vtk(f, "u", &format!("ddonet field {label}"));
        validate_vtk(&text).map_err(|e| {
            CliError::Core(ddonet::Error::Format {
                offset: 0,
                detail: e,
            })
        })?;
        let path = run.out.join("vtk").join(format!("{label}.vtk"));
        write(&path, text.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

struct Outcome {
    entry: RunEntry,
    fields: Vec<(String, Field)>,
}

fn entry(name: &str, scheme: &str, binding: Binding) -> RunEntry {
    RunEntry {
        name: name.into(),
        scheme: scheme.into(),
        binding: format!("{binding:?}").to_lowercase(),
        converged: false,
        iterations: 0,
        residual_history: Vec::new(),
        ml2re: None,
        mae: None,
        mre: None,
        interface_mismatch: None,
        params: BTreeMap::new(),
        failure: None,
    }
}

fn scheme_name(s: Scheme) -> String {
    serde_json::to_value(s)
        .unwrap()
        .as_str()
        .unwrap()
        .to_string()
}

/// One coupled solve of a box problem, compared with the monolithic solve
/// when an oracle field is given.
fn box_run(
    run: &Run,
    name: &str,
    variant: Option<&VariantBlock>,
    oracle: Option<&Field>,
) -> CliResult<Outcome> {
    let setup = run.setup(variant)?;
    let (scheme, sched) = schedule(&run.config.solver, variant);
    let binding = run.config.solver.binding;
    let whole = setup.subs.len() == 1 && setup.subs[0].label == "global";
    if whole && scheme != Scheme::IterationFree {
        return Err(CliError::config(format!(
            "scheme `{}` needs geometry.overlap or geometry.cuts",
            scheme_name(scheme)
        )));
    }
    let mut e = entry(name, &scheme_name(scheme), binding);
    let solvers: Vec<SubdomainSolver> = match binding {
        Binding::Classical => {
            if scheme == Scheme::IterationFree {
                return Err(CliError::config(
                    "iteration-free assembly needs neural binding",
                ));
            }
            setup.classical_solvers()?
        }
        Binding::Neural => {
            let labels: Vec<String> = setup.subs.iter().map(|s| s.label.clone()).collect();
            let nets = nets_for(run, &labels)?;
            e.params = nets
                .iter()
                .map(|(l, n)| (l.clone(), n.n_params()))
                .collect();
            setup.neural_solvers(&nets, &run.gp_faces()?, scheme == Scheme::IterationFree)?
        }
    };
    let res: DdmResult = run_ddm(scheme, &solvers, &sched)?;
    e.converged = res.converged;
    e.iterations = res.iterations_used;
    e.residual_history = res.residual_history.clone();
    e.interface_mismatch = res.records.last().map(|r| r.interface_mismatch);
    if let Some(truth) = oracle {
        let got = assemble(&solvers, &res.fields, &truth.grid)?;
        e.ml2re = Some(ml2re(&[&got.values], &[&truth.values])?);
        e.mae = Some(mae(&[&got.values], &[&truth.values])?);
    }
    let fields = res.labels.iter().cloned().zip(res.fields).collect();
    Ok(Outcome { entry: e, fields })
}

fn shapes_of(run: &Run) -> CliResult<Vec<ShapeParams>> {
    let s = run.config.geometry.shapes.as_ref().unwrap();
    match &s.params {
        Some(rows) => rows
            .iter()
            .map(|r| {
                let p = ShapeParams::from_array(*r);
                p.validate()?;
                Ok(p)
            })
            .collect(),
        None => Ok(sample_shapes(s.count, s.lattice, run.stream(SHAPES, 0))),
    }
}

fn resistance_run(run: &Run, name: &str, binding: Binding) -> CliResult<RunEntry> {
    let s = run.config.geometry.shapes.as_ref().unwrap();
    let (scheme, sched) = schedule(&run.config.solver, None);
    if scheme != Scheme::Framework2 {
        return Err(CliError::config(
            "shape geometries are coupled with framework2",
        ));
    }
    let mut e = entry(name, "framework2", binding);
    let bind = match binding {
        Binding::Classical => ResistanceBinding::Classical {
            h: run.config.geometry.spacing,
        },
        Binding::Neural => {
            let labels: Vec<String> = s.kind.decompose(&shapes_of(run)?[0])?.labels().to_vec();
            let nets = nets_for(run, &labels)?;
            e.params = nets
                .iter()
                .map(|(l, n)| (l.clone(), n.n_params()))
                .collect();
            ResistanceBinding::Neural { nets, n: s.nodes }
        }
    };
    let setup = ResistanceSetup {
        kind: s.kind,
        sigma: s.sigma,
        reference_h: s
            .reference_spacing
            .unwrap_or(run.config.geometry.spacing / 2.0),
        schedule: sched,
    };
    let rep = resistance_experiment(&shapes_of(run)?, &bind, &setup)?;
    e.converged = rep.failures.is_empty();
    e.iterations = rep.ddm_iterations.iter().copied().max().unwrap_or(0);
    e.mre = Some(rep.mre);
    e.ml2re = Some(rep.potential_ml2re);
    e.mae = Some(rep.potential_mae);
    if !rep.failures.is_empty() {
        e.failure = Some(format!(
            "{} of {} shapes failed",
            rep.failures.len(),
            rep.re.len() + rep.failures.len()
        ));
    }
    Ok(e)
}

pub fn solve(run: &Run) -> CliResult<MetricsReport> {
    let mut report = MetricsReport::new("solve", run.seed);
    if run.config.geometry.shapes.is_some() {
        let t0 = Instant::now();
        let e = resistance_run(run, "solve", run.config.solver.binding)?;
        report.phase("solve", t0.elapsed().as_secs_f64());
        report.runs.push(e);
        run.save_report(&mut report)?;
        return Ok(report);
    }
    let oracle = if run.config.solver.oracle {
        let t0 = Instant::now();
        let f = run.setup(None)?.oracle()?;
        report.phase("reference", t0.elapsed().as_secs_f64());
        Some(f)
    } else {
        None
    };
    let t0 = Instant::now();
    let out = box_run(run, "solve", None, oracle.as_ref())?;
    report.phase("solve", t0.elapsed().as_secs_f64());
    save_fields(run, &out.fields)?;
    if run.config.output.vtk {
        write_vtk(run, &out.fields)?;
    }
    let e = &out.entry;
    println!(
        "{}: converged={} iterations={} ml2re={}",
        e.scheme,
        e.converged,
        e.iterations,
        e.ml2re.map_or("-".into(), |v| format!("{v:.3e}"))
    );
    report.runs.push(out.entry);
    run.save_report(&mut report)?;
    Ok(report)
}

/// Monolithic solve and, with neural binding and a `global` checkpoint,
/// the direct prediction of the undecomposed net; then every variant.
pub fn bench(run: &Run) -> CliResult<MetricsReport> {
    let mut report = MetricsReport::new("bench", run.seed);
    let binding = run.config.solver.binding;
    if run.config.geometry.shapes.is_some() {
        let t0 = Instant::now();
        let e = resistance_run(run, "ddm", binding)?;
        report.phase("solve:ddm", t0.elapsed().as_secs_f64());
        report.runs.push(e);
        run.save_report(&mut report)?;
        return Ok(report);
    }
    let variants = run
        .config
        .bench
        .as_ref()
        .map(|b| b.variants.clone())
        .ok_or_else(|| CliError::config("bench needs a [bench] table with variants"))?;
    let setup = BoxSetup::new(&run.config.geometry, &Decomposition::Whole)?;
    let t0 = Instant::now();
    let fd = FdSolver::new(
        &setup.global_problem(),
        &setup.n,
        LinearSolverOptions::default(),
    )?;
    let truth = fd.solve()?;
    report.phase("solve:single", t0.elapsed().as_secs_f64());
    let mut single = entry("single", "monolithic", Binding::Classical);
    single.converged = true;
    single.ml2re = Some(0.0);
    single.mae = Some(0.0);
    report.runs.push(single);

    if binding == Binding::Neural && run.checkpoint_path("global").exists() {
        let t0 = Instant::now();
        let nets = nets_for(run, &["global".to_string()])?;
        let solvers = setup.neural_solvers(&nets, &run.gp_faces()?, false)?;
        let res = run_iteration_free(&solvers)?;
        let mut e = entry("direct", "direct", binding);
        e.converged = true;
        e.params = nets
            .iter()
            .map(|(l, n)| (l.clone(), n.n_params()))
            .collect();
        e.ml2re = Some(ml2re(&[&res.fields[0].values], &[&truth.values])?);
        e.mae = Some(mae(&[&res.fields[0].values], &[&truth.values])?);
        report.phase("solve:direct", t0.elapsed().as_secs_f64());
        report.runs.push(e);
    }
    for v in &variants {
        let t0 = Instant::now();
        let e = match box_run(run, &v.name, Some(v), Some(&truth)) {
            Ok(o) => o.entry,
            Err(err) => {
                let (scheme, _) = schedule(&run.config.solver, Some(v));
                let mut e = entry(&v.name, &scheme_name(scheme), binding);
                e.failure = Some(err.line());
                e
            }
        };
        report.phase(&format!("solve:{}", v.name), t0.elapsed().as_secs_f64());
        println!(
            "{}: converged={} iterations={} ml2re={}",
            e.name,
            e.converged,
            e.iterations,
            e.ml2re.map_or("-".into(), |v| format!("{v:.3e}"))
        );
        report.runs.push(e);
    }
    run.save_report(&mut report)?;
    Ok(report)
}

/// Converts the fields of the last `solve` to VTK files.
pub fn export_vtk(run: &Run) -> CliResult<Vec<PathBuf>> {
    let fields = load_fields(run)?;
    let paths = write_vtk(run, &fields)?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(paths)
}
