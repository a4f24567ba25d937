use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hflow_core::fields::{read_clip, validate_clip, write_clip, Grid, SceneClip};
use hflow_core::kinematics::{MassProfile, Skeleton};
use hflow_core::metrics::{clip_report, compare_clips};
use hflow_core::optimizer::{
    self, make_teachers, perturb, render_log, OptimConfig, Perturbation, StepSizes, TeacherNoise,
};
use hflow_core::priors::{
    finite_difference_check, parse_prior_config, rel_err_bound, total_objective, ClipVariables,
    Constraint, PriorWeights, Tolerances,
};
use hflow_core::synthbench::{
    generate_scene_with, Preset, SceneOptions, DEFAULT_DT, DEFAULT_SUBDIVISIONS,
};
use hflow_core::{Error, Result};

use crate::ppm::dump_flow_magnitude;
use crate::report::render_report;

/// Exit code plus text for stdout (`report`) and stderr (`diagnostic`).
#[derive(Debug)]
pub struct CommandResult {
    pub code: i32,
    pub report: String,
    pub diagnostic: String,
}

impl CommandResult {
    fn ok(report: String) -> Self {
        CommandResult {
            code: 0,
            report,
            diagnostic: String::new(),
        }
    }

    pub fn failure(code: i32, diagnostic: String) -> Self {
        CommandResult {
            code,
            report: String::new(),
            diagnostic,
        }
    }
}

/// Build the global rayon pool from `HFLOW_THREADS` when set.
pub fn configure_threads(value: Option<&str>) -> std::result::Result<(), String> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("HFLOW_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("HFLOW_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "hflow",
    version,
    about = "Dense human scene flow with physics priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic clip with exact depth, flow, mask and pose.
    Gen(GenArgs),
    /// Compare a predicted clip against ground truth.
    Eval(EvalArgs),
    /// Evaluate the prior constraints on one clip.
    Score(ScoreArgs),
    /// Perturb a ground-truth clip and refine it by gradient descent on the priors.
    Optimize(OptimizeArgs),
    /// Compare analytic constraint gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print container contents, read warnings and invariant violations.
    Info(InfoArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Motion preset: idle, walk or swing.
    #[arg(long, value_parser = parse_preset)]
    preset: Preset,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "128x128", value_parser = parse_size)]
    size: Grid,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frame interval in seconds.
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    /// Orbit the camera around the subject.
    #[arg(long)]
    orbit: bool,
    /// Capsule tessellation level of the body mesh.
    #[arg(long, default_value_t = DEFAULT_SUBDIVISIONS)]
    subdivisions: usize,
    /// Output container path.
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-frame flow-magnitude PPM images.
    #[arg(long)]
    dump_ppm: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted clip.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth clip; its masks select the evaluated pixels.
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args, Debug)]
struct PriorArgs {
    /// Zero the weight of a constraint (silh, skel, com, eff, dist, cam); repeatable.
    #[arg(long, value_parser = parse_constraint)]
    disable: Vec<Constraint>,
    /// `key = value` file with lambda_<constraint> weights and tolerances.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TeacherArgs {
    /// Teacher depth noise standard deviation, meters [default: 0 for score, 0.02 for optimize].
    #[arg(long)]
    teacher_depth_sigma: Option<f64>,
    /// Teacher depth bias, meters [default: 0 for score, 0.02 for optimize].
    #[arg(long)]
    teacher_depth_bias: Option<f64>,
    /// Teacher joint noise standard deviation, meters [default: 0 for score, 0.01 for optimize].
    #[arg(long)]
    teacher_pose_sigma: Option<f64>,
}

impl TeacherArgs {
    fn resolve(&self, base: TeacherNoise) -> TeacherNoise {
        TeacherNoise {
            depth_sigma: self.teacher_depth_sigma.unwrap_or(base.depth_sigma),
            depth_bias: self.teacher_depth_bias.unwrap_or(base.depth_bias),
            pose_sigma: self.teacher_pose_sigma.unwrap_or(base.pose_sigma),
        }
    }
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Clip whose fields are scored as the decision variables.
    #[arg(long)]
    clip: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    priors: PriorArgs,
    #[command(flatten)]
    teacher: TeacherArgs,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Ground-truth clip to perturb and recover.
    #[arg(long)]
    clip: PathBuf,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    priors: PriorArgs,
    #[command(flatten)]
    teacher: TeacherArgs,
    /// Initial flow perturbation standard deviation, meters [default: 0.1].
    #[arg(long)]
    sigma_flow: Option<f64>,
    /// Initial depth perturbation standard deviation, meters [default: 0.05].
    #[arg(long)]
    sigma_depth: Option<f64>,
    /// Initial joint perturbation standard deviation, meters [default: 0.05].
    #[arg(long)]
    sigma_pose: Option<f64>,
    /// Depth step size [default: 0.002].
    #[arg(long)]
    step_depth: Option<f64>,
    /// Flow step size [default: 0.002].
    #[arg(long)]
    step_flow: Option<f64>,
    /// Joint step size [default: 0.002].
    #[arg(long)]
    step_pose: Option<f64>,
    /// Write the trajectory log (CSV) here.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the refined clip here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Constraint name or `all`.
    #[arg(long, default_value = "all")]
    constraint: String,
    /// First fixture seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
}

#[derive(Args, Debug)]
struct InfoArgs {
    #[arg(long)]
    clip: PathBuf,
    /// Directory for per-frame flow-magnitude PPM images.
    #[arg(long)]
    dump_ppm: Option<PathBuf>,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_constraint(s: &str) -> std::result::Result<Constraint, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_size(s: &str) -> std::result::Result<Grid, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in {s:?}"))?;
    let h = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in {s:?}"))?;
    Grid::new(w, h).map_err(|e| e.to_string())
}

/// Parse `argv` (program name first) and run the chosen subcommand.
pub fn dispatch(argv: &[String]) -> CommandResult {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    CommandResult::ok(e.render().to_string())
                }
                _ => CommandResult::failure(1, e.render().to_string()),
            };
        }
    };
    let out = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score(a),
        Command::Optimize(a) => optimize(a),
        Command::Gradcheck(a) => return gradcheck(a),
        Command::Info(a) => return info(a),
    };
    match out {
        Ok(text) => CommandResult::ok(text),
        Err(e) => CommandResult::failure(e.exit_code(), format!("error: {e}")),
    }
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io { offset: 0, source }
}

fn load(path: &Path) -> Result<(SceneClip, Vec<String>)> {
    let file = fs::File::open(path).map_err(io_err)?;
    let loaded = read_clip(std::io::BufReader::new(file))?;
    let warnings = loaded
        .warnings
        .iter()
        .map(|w| {
            format!(
                "warning: {}: {} at byte {}: {}",
                path.display(),
                w.tag,
                w.offset,
                w.message
            )
        })
        .collect();
    Ok((loaded.clip, warnings))
}

fn load_valid(path: &Path) -> Result<(SceneClip, Vec<String>)> {
    let (clip, warnings) = load(path)?;
    let violations = validate_clip(&clip);
    if let Some(v) = violations.first() {
        return Err(Error::Validation(format!(
            "{}: {} invariant violations, first: {v}",
            path.display(),
            violations.len()
        )));
    }
    Ok((clip, warnings))
}

fn save(clip: &SceneClip, path: &Path) -> Result<u64> {
    let file = fs::File::create(path).map_err(io_err)?;
    write_clip(clip, std::io::BufWriter::new(file))
}

fn with_warnings(warnings: Vec<String>, body: String) -> String {
    let mut out = String::new();
    for w in warnings {
        out.push_str(&w);
        out.push('\n');
    }
    out + &body
}

fn gen(a: GenArgs) -> Result<String> {
    let opts = SceneOptions {
        orbit: a.orbit,
        subdivisions: a.subdivisions,
        ..SceneOptions::default()
    };
    let clip = generate_scene_with(a.preset, a.size, a.frames, a.dt, a.seed, &opts)?;
    let bytes = save(&clip, &a.out)?;
    let mut out = format!(
        "wrote {} ({bytes} bytes): preset={} frames={} size={}x{} seed={}\n",
        a.out.display(),
        a.preset,
        clip.len(),
        a.size.width,
        a.size.height,
        a.seed
    );
    if let Some(dir) = a.dump_ppm {
        let n = dump_flow_magnitude(&clip, &dir)?;
        out.push_str(&format!(
            "wrote {n} flow-magnitude images to {}\n",
            dir.display()
        ));
    }
    Ok(out)
}

fn eval(a: EvalArgs) -> Result<String> {
    let (pred, mut warnings) = load_valid(&a.pred)?;
    let (gt, w) = load_valid(&a.gt)?;
    warnings.extend(w);
    let r = compare_clips(&pred, &gt)?;
    Ok(with_warnings(warnings, render_report(&[("pred", &r)])))
}

fn prior_settings(p: &PriorArgs) -> Result<(PriorWeights, Tolerances)> {
    let (mut w, t) = match &p.config {
        Some(path) => parse_prior_config(&fs::read_to_string(path).map_err(io_err)?)?,
        None => (PriorWeights::default(), Tolerances::default()),
    };
    for &c in &p.disable {
        w.disable(c);
    }
    Ok((w, t))
}

fn score(a: ScoreArgs) -> Result<String> {
    let (clip, warnings) = load_valid(&a.clip)?;
    let (w, t) = prior_settings(&a.priors)?;
    let zero = TeacherNoise {
        depth_sigma: 0.0,
        depth_bias: 0.0,
        pose_sigma: 0.0,
    };
    let teachers = make_teachers(&clip, &a.teacher.resolve(zero), a.seed);
    let vars = ClipVariables::from_clip(&clip);
    let rep = total_objective(
        &vars,
        &clip,
        Some(&teachers),
        &w,
        &t,
        Skeleton::smpl24(),
        MassProfile::de_leva(),
        a.seed,
    )?;
    let mut out = format!("{:<8}{:>8}{:>16}\n", "", "lambda", "value");
    for c in Constraint::ALL {
        let v = if w.get(c) > 0.0 {
            format!("{:.6e}", rep.part(c))
        } else {
            "disabled".into()
        };
        out.push_str(&format!(
            "{:<8}{:>8}{:>16}\n",
            format!("c_{c}"),
            w.get(c),
            v
        ));
    }
    out.push_str(&format!(
        "{:<8}{:>8}{:>16}\n\n",
        "total",
        "",
        format!("{:.6e}", rep.value)
    ));
    for (c, v) in &rep.parts {
        out.push_str(&format!("score.{c}={v:e}\n"));
    }
    out.push_str(&format!("score.total={:e}\n", rep.value));
    if let Some((s, l)) = rep.window {
        out.push_str(&format!("score.eff_window={s}+{l}\n"));
    }
    Ok(with_warnings(warnings, out))
}

fn optimize(a: OptimizeArgs) -> Result<String> {
    let (clip, warnings) = load_valid(&a.clip)?;
    let (weights, tolerances) = prior_settings(&a.priors)?;
    let (p0, s0) = (Perturbation::default(), StepSizes::default());
    let config = OptimConfig {
        steps: StepSizes {
            depth: a.step_depth.unwrap_or(s0.depth),
            flow: a.step_flow.unwrap_or(s0.flow),
            pose: a.step_pose.unwrap_or(s0.pose),
        },
        iterations: a.iterations,
        weights,
        tolerances,
        perturbation: Perturbation {
            flow: a.sigma_flow.unwrap_or(p0.flow),
            depth: a.sigma_depth.unwrap_or(p0.depth),
            pose: a.sigma_pose.unwrap_or(p0.pose),
        },
        teacher: a.teacher.resolve(TeacherNoise::default()),
        seed: a.seed,
    };
    config.validate()?;
    let initial = perturb(&clip, &config.perturbation, config.seed);
    let before = clip_report(
        &initial.vars.depth,
        &initial.vars.flow,
        &initial.vars.poses,
        &clip,
    )?;
    let (state, log) = optimizer::run(&clip, &config)?;
    let after = clip_report(
        &state.vars.depth,
        &state.vars.flow,
        &state.vars.poses,
        &clip,
    )?;
    let mut out = render_report(&[("initial", &before), ("final", &after)]);
    let (first, last) = (log.first().unwrap(), log.last().unwrap());
    out.push_str(&format!(
        "objective.initial={:e}\nobjective.final={:e}\nsteps={}\n",
        first.objective, last.objective, state.step
    ));
    if let Some(path) = &a.log {
        fs::write(path, render_log(&log)).map_err(io_err)?;
        out.push_str(&format!("log={}\n", path.display()));
    }
    if let Some(path) = &a.out {
        let mut refined = clip.clone();
        for (i, f) in refined.frames.iter_mut().enumerate() {
            f.depth = state.vars.depth[i].clone();
            f.flow = state.vars.flow[i].clone();
            f.pose = state.vars.poses[i].clone();
        }
        refined.quantize_f32();
        let bytes = save(&refined, path)?;
        out.push_str(&format!("out={} ({bytes} bytes)\n", path.display()));
    }
    Ok(with_warnings(warnings, out))
}

fn gradcheck(a: GradcheckArgs) -> CommandResult {
    let constraints: Vec<Constraint> = if a.constraint.trim() == "all" {
        Constraint::ALL.to_vec()
    } else {
        match a.constraint.parse() {
            Ok(c) => vec![c],
            Err(e) => return CommandResult::failure(1, format!("error: {e}")),
        }
    };
    if a.seeds == 0 {
        return CommandResult::failure(1, "error: --seeds must be at least 1".into());
    }
    let mut out = String::new();
    let mut failed = 0;
    for c in constraints {
        let bound = rel_err_bound(c);
        let mut worst = 0.0f64;
        for seed in a.seed..a.seed + a.seeds {
            match finite_difference_check(c, seed, a.step) {
                Ok(r) => {
                    worst = worst.max(r.max_rel_err);
                    let verdict = if r.max_rel_err <= bound {
                        "pass"
                    } else {
                        "FAIL"
                    };
                    out.push_str(&format!(
                        "gradcheck constraint={c} seed={seed} max_rel_err={:e} entries={} redraws={} bound={bound:e} {verdict}\n",
                        r.max_rel_err, r.entries, r.redraws
                    ));
                    if r.max_rel_err > bound {
                        failed += 1;
                    }
                }
                Err(e) => {
                    let code = e.exit_code();
                    return CommandResult {
                        code,
                        report: out,
                        diagnostic: format!("error: {c} seed {seed}: {e}"),
                    };
                }
            }
        }
        out.push_str(&format!("gradcheck constraint={c} worst={worst:e}\n"));
    }
    if failed > 0 {
        CommandResult {
            code: 3,
            report: out,
            diagnostic: format!("error: {failed} gradient checks exceeded their bound"),
        }
    } else {
        CommandResult::ok(out)
    }
}

fn info(a: InfoArgs) -> CommandResult {
    let run = || -> Result<(String, usize)> {
        let (clip, warnings) = load(&a.clip)?;
        let mut out = String::new();
        let g = clip.grid().unwrap();
        out.push_str(&format!(
            "file={}\nversion={}\nframes={}\nsize={}x{}\nseed={}\ndt_seconds={}\nraster={}\n",
            a.clip.display(),
            clip.meta.version,
            clip.len(),
            g.width,
            g.height,
            clip.meta.seed,
            clip.meta.dt_seconds,
            clip.frames.iter().all(|f| f.raster.is_some())
        ));
        for (i, f) in clip.frames.iter().enumerate() {
            let fg = f.mask.foreground_count();
            let peak = f
                .flow
                .values
                .iter()
                .map(|v| v.norm())
                .fold(0.0f64, f64::max);
            out.push_str(&format!("frame {i}: foreground={fg} max_flow_m={peak:e}\n"));
        }
        for w in &warnings {
            out.push_str(w);
            out.push('\n');
        }
        let violations = validate_clip(&clip);
        for v in &violations {
            out.push_str(&format!("violation: {v}\n"));
        }
        out.push_str(&format!(
            "warnings={}\nviolations={}\n",
            warnings.len(),
            violations.len()
        ));
        if let Some(dir) = &a.dump_ppm {
            let n = dump_flow_magnitude(&clip, dir)?;
            out.push_str(&format!(
                "wrote {n} flow-magnitude images to {}\n",
                dir.display()
            ));
        }
        Ok((out, violations.len()))
    };
    match run() {
        Ok((out, 0)) => CommandResult::ok(out),
        Ok((out, n)) => CommandResult {
            code: 1,
            report: out,
            diagnostic: format!("error: {n} invariant violations"),
        },
        Err(e) => CommandResult::failure(e.exit_code(), format!("error: {e}")),
    }
}
