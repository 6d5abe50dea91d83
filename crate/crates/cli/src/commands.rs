use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use linsketch::compiler::{minimax_boost, reduce, ReductionConfig, Stage, Variant, MAX_DOMAIN};
use linsketch::fourier::DenseFunction;
use linsketch::prg::{derandomized_apply, derandomized_apply_sorted, fsm_distance, BlockFsm, NisanGenerator, SketchTemplate};
use linsketch::protocol::{fsm_to_players, run_broadcast, BroadcastProtocol, StreamFsm};
use linsketch::sketch::{
    apply_stream, approx_error, load_sketch, save_sketch, success_probability, EvalMode, InputDistribution, RandomizedSketch,
    SketchBody,
};
use linsketch::stream::{accumulate, StreamFile, Update};
use linsketch::zoo::{self, ZooParams};
use linsketch::GroupSpec;

use crate::config::{DistributionSpec, ExperimentConfig, ProtocolSpec};
use crate::output::{Outcome, PerXRow};

pub const DEFAULT_SUCCESS_TOLERANCE: f64 = 0.01;
pub const DEFAULT_ERROR_TOLERANCE: f64 = 0.02;
pub const DEFAULT_DISTANCE_TOLERANCE: f64 = 0.05;

/// Errors raised before any work starts; reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub tolerance: Option<f64>,
}

fn is_binary(f: &DenseFunction) -> bool {
    f.real_values().iter().all(|&v| v == 0.0 || v == 1.0)
}

fn load_function(cfg: &ExperimentConfig) -> Result<(DenseFunction, ZooParams)> {
    let named = cfg.function().map_err(|e| config_err(e.to_string()))?;
    let f = zoo::function(&named.name, &named.params).map_err(|e| config_err(e.to_string()))?;
    Ok((f, named.params.clone()))
}

fn load_protocol(cfg: &ExperimentConfig, spec: &ProtocolSpec, fallback: &ZooParams, players: usize) -> Result<BroadcastProtocol> {
    if let Some(path) = &spec.fsm_file {
        if spec.name != "state-passing" {
            return Err(config_err("fsm_file is only used by state-passing"));
        }
        let path = cfg.resolve(path);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let fsm: StreamFsm = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        return fsm_to_players(&fsm, players).map_err(|e| config_err(e.to_string()));
    }
    let params = spec.params.as_ref().unwrap_or(fallback);
    zoo::protocol(&spec.name, params, players).map_err(|e| config_err(e.to_string()))
}

fn load_distribution(cfg: &ExperimentConfig, order: usize) -> Result<InputDistribution> {
    match &cfg.distribution {
        DistributionSpec::Uniform => Ok(InputDistribution::uniform(order)),
        DistributionSpec::Weights { path } => {
            #[derive(serde::Deserialize)]
            struct Row {
                x: usize,
                weight: f64,
            }
            let path = cfg.resolve(path);
            let mut reader = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut weights = vec![0.0; order];
            for row in reader.deserialize() {
                let row: Row = row.with_context(|| format!("parsing {}", path.display()))?;
                if row.x >= order {
                    return Err(config_err(format!("weight for x = {} outside a domain of order {order}", row.x)));
                }
                weights[row.x] += row.weight;
            }
            InputDistribution::from_weights(&weights).map_err(|e| config_err(e.to_string()))
        }
    }
}

fn default_variant(domain: &GroupSpec, f: &DenseFunction) -> Variant {
    match (domain.is_boolean(), is_binary(f)) {
        (true, true) => Variant::ExactF2,
        (true, false) => Variant::ApproxF2,
        (false, true) => Variant::ExactGroup,
        (false, false) => Variant::ApproxGroup,
    }
}

fn coords_text(domain: &GroupSpec, x: usize) -> String {
    domain.coords_of(x).iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------

pub fn reduce_cmd(ctx: &RunContext, out: &Path) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let (f, params) = load_function(cfg)?;
    let domain = f.domain().clone();
    let variant = cfg.variant.unwrap_or_else(|| default_variant(&domain, &f));
    let rcfg = ReductionConfig {
        seed: ctx.seed,
        ..cfg.reduction.clone().ok_or_else(|| config_err("config needs a [reduction] section"))?
    };
    if domain.order() > MAX_DOMAIN {
        return Err(config_err(format!("domain of order {} exceeds the enumeration limit {MAX_DOMAIN}", domain.order())));
    }
    let warnings = rcfg.validate(&domain, variant).map_err(config_err)?;
    let spec = cfg.protocol.as_ref().ok_or_else(|| config_err("config needs a [protocol] section"))?;
    let protocol = load_protocol(cfg, spec, &params, rcfg.players + 1)?;
    let d = load_distribution(cfg, domain.order())?;
    let fv = f.real_values();

    if let Some(rounds) = cfg.boost_rounds {
        let tol = ctx.tolerance.unwrap_or(DEFAULT_SUCCESS_TOLERANCE);
        let res = match minimax_boost(&protocol, &f, &rcfg, variant, rounds) {
            Ok(r) => r,
            Err(e) if e.stage == Stage::Config => return Err(config_err(e.to_string())),
            Err(e) => return Ok(Outcome::failed(format!("{e}"), json!({ "stage": e.stage, "message": e.message }))),
        };
        std::fs::write(out.join("sketch.json"), save_sketch(&SketchBody::Randomized { sketch: res.sketch.clone() })?)?;
        let rows: Vec<PerXRow> = (0..domain.order())
            .map(|x| PerXRow {
                x,
                coords: coords_text(&domain, x),
                f: fv[x],
                output: None,
                success: Some(res.per_x[x]),
                sq_error: None,
            })
            .collect();
        crate::output::write_csv(&out.join("per_x.csv"), &rows)?;
        let passed = res.min_success >= 1.0 - tol;
        let result = json!({
            "variant": variant,
            "warnings": warnings,
            "rounds": res.rounds,
            "converged": res.converged,
            "min_success": res.min_success,
            "tolerance": tol,
        });
        return Ok(if passed {
            Outcome::passed(result)
        } else {
            Outcome::failed(format!("min per-x success {} below {}", res.min_success, 1.0 - tol), result)
        });
    }

    let red = match reduce(&protocol, &f, &d, &rcfg, variant) {
        Ok(r) => r,
        Err(e) if e.stage == Stage::Config => return Err(config_err(e.to_string())),
        Err(e) => return Ok(Outcome::failed(format!("{e}"), json!({ "stage": e.stage, "message": e.message }))),
    };
    std::fs::write(out.join("sketch.json"), save_sketch(&SketchBody::Deterministic { sketch: red.sketch.clone() })?)?;
    let rows: Vec<PerXRow> = (0..domain.order())
        .map(|x| {
            let g = red.sketch.eval_index(x);
            PerXRow {
                x,
                coords: coords_text(&domain, x),
                f: fv[x],
                output: Some(g),
                success: variant.is_exact().then(|| (g == fv[x]) as u8 as f64),
                sq_error: (!variant.is_exact()).then(|| (g - fv[x]).powi(2)),
            }
        })
        .collect();
    crate::output::write_csv(&out.join("per_x.csv"), &rows)?;
    let rep = &red.report;
    let (passed, reason, tol) = if variant.is_exact() {
        let tol = ctx.tolerance.unwrap_or(DEFAULT_SUCCESS_TOLERANCE);
        let s = rep.success.unwrap_or(0.0);
        (s >= rep.target - tol, format!("success {s} below {}", rep.target - tol), tol)
    } else {
        let tol = ctx.tolerance.unwrap_or(DEFAULT_ERROR_TOLERANCE);
        let e = rep.error.unwrap_or(f64::INFINITY);
        (e <= 2.0 * rep.target + tol, format!("error {e} above {}", 2.0 * rep.target + tol), tol)
    };
    let result = json!({ "tolerance": tol, "reduction": rep });
    Ok(if passed { Outcome::passed(result) } else { Outcome::failed(reason, result) })
}

// ---------------------------------------------------------------------------

pub fn sketch_eval_cmd(ctx: &RunContext, out: &Path) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let (f, _) = load_function(cfg)?;
    let domain = f.domain().clone();
    let path = cfg.sketch.as_ref().ok_or_else(|| config_err("config needs a sketch path"))?;
    let path = cfg.resolve(path);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let rsk = match load_sketch(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))? {
        SketchBody::Deterministic { sketch } => RandomizedSketch::deterministic(sketch),
        SketchBody::Randomized { sketch } => RandomizedSketch { seed: ctx.seed, ..sketch },
    };
    let d = load_distribution(cfg, domain.order())?;
    let mode = cfg.mode.unwrap_or(EvalMode::Exact);
    let fv = f.real_values();
    if is_binary(&f) {
        let tol = ctx.tolerance.unwrap_or(DEFAULT_SUCCESS_TOLERANCE);
        let rep = success_probability(&rsk, &f, mode, Some(&d)).map_err(|e| anyhow!(e))?;
        let rows: Vec<PerXRow> = (0..domain.order())
            .map(|x| PerXRow {
                x,
                coords: coords_text(&domain, x),
                f: fv[x],
                output: None,
                success: Some(rep.per_x[x]),
                sq_error: None,
            })
            .collect();
        crate::output::write_csv(&out.join("per_x.csv"), &rows)?;
        let weighted = rep.weighted.unwrap_or(0.0);
        let result = json!({ "mode": mode, "tolerance": tol, "success": rep });
        Ok(if weighted >= 1.0 - tol {
            Outcome::passed(result)
        } else {
            Outcome::failed(format!("success {weighted} below {}", 1.0 - tol), result)
        })
    } else {
        let tol = ctx.tolerance.unwrap_or(DEFAULT_ERROR_TOLERANCE);
        let rep = approx_error(&rsk, &f, mode, Some(&d)).map_err(|e| anyhow!(e))?;
        let rows: Vec<PerXRow> = (0..domain.order())
            .map(|x| PerXRow {
                x,
                coords: coords_text(&domain, x),
                f: fv[x],
                output: None,
                success: None,
                sq_error: Some(rep.per_x[x]),
            })
            .collect();
        crate::output::write_csv(&out.join("per_x.csv"), &rows)?;
        let weighted = rep.weighted.unwrap_or(f64::INFINITY);
        let result = json!({ "mode": mode, "tolerance": tol, "error": rep });
        Ok(if weighted <= tol {
            Outcome::passed(result)
        } else {
            Outcome::failed(format!("error {weighted} above {tol}"), result)
        })
    }
}

// ---------------------------------------------------------------------------

fn index_of(domain: &GroupSpec, coords: &[u32]) -> Result<usize> {
    domain.index_of(coords).map_err(|e| anyhow!(e))
}

pub fn simulate_cmd(ctx: &RunContext, _out: &Path) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let path = cfg.stream.as_ref().ok_or_else(|| config_err("config needs a stream path"))?;
    let path = cfg.resolve(path);
    let stream = StreamFile::read(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let domain = GroupSpec::cyclic_power(stream.p, stream.n).map_err(|e| config_err(e.to_string()))?;
    let x = index_of(&domain, &stream.accumulate())?;
    let function = match &cfg.function {
        Some(_) => Some(load_function(cfg)?),
        None => None,
    };
    if let Some((f, _)) = &function {
        if f.domain() != &domain {
            return Err(config_err("function domain differs from the stream's Z_p^n"));
        }
    }
    let expected = function.as_ref().map(|(f, _)| f.re(x));
    let mut result = json!({
        "n": stream.n,
        "p": stream.p,
        "updates": stream.updates.len(),
        "x": stream.accumulate(),
        "expected": expected,
    });
    let mut mismatches = Vec::new();

    if let Some(sp) = &cfg.sketch {
        let sp = cfg.resolve(sp);
        let text = std::fs::read_to_string(&sp).with_context(|| format!("reading {}", sp.display()))?;
        let SketchBody::Deterministic { sketch } = load_sketch(&text).map_err(|e| config_err(e.to_string()))? else {
            return Err(config_err("simulate streams into deterministic sketches only"));
        };
        if sketch.domain().map_err(|e| anyhow!(e))? != domain {
            return Err(config_err("sketch domain differs from the stream's Z_p^n"));
        }
        let state = apply_stream(&sketch, &stream.updates).map_err(|e| anyhow!(e))?;
        let streamed = sketch.eval_state(&state).map_err(|e| anyhow!(e))?;
        let direct = sketch.eval_index(x);
        if streamed != direct {
            mismatches.push(format!("streamed sketch output {streamed} differs from its value {direct} on x"));
        }
        if let Some(e) = expected {
            if streamed != e {
                mismatches.push(format!("sketch output {streamed} differs from f(x) = {e}"));
            }
        }
        result["sketch"] = json!({ "state": state.values, "output": streamed });
    }

    if let Some(spec) = &cfg.protocol {
        let players = spec.players.ok_or_else(|| config_err("simulate needs protocol.players"))?;
        if players == 0 {
            return Err(config_err("protocol.players must be at least 1"));
        }
        let fallback = function.as_ref().map(|(_, p)| p.clone()).unwrap_or(ZooParams {
            n: Some(stream.n),
            p: (stream.p != 2).then_some(stream.p),
            ..Default::default()
        });
        let protocol = load_protocol(cfg, spec, &fallback, players)?;
        if protocol.domain() != &domain {
            return Err(config_err("protocol domain differs from the stream's Z_p^n"));
        }
        // player i receives the i-th consecutive chunk of the stream
        let chunk = stream.updates.len().div_ceil(players).max(1);
        let inputs: Vec<usize> = (0..players)
            .map(|i| {
                let lo = (i * chunk).min(stream.updates.len());
                let hi = ((i + 1) * chunk).min(stream.updates.len());
                index_of(&domain, &accumulate(stream.n, stream.p, &stream.updates[lo..hi]))
            })
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let tape = protocol.sample_tape(&mut rng);
        let run = run_broadcast(&protocol, &inputs, tape).map_err(|e| anyhow!(e))?;
        if let Some(e) = expected {
            if run.output != e {
                mismatches.push(format!("protocol output {} differs from f(x) = {e}", run.output));
            }
        }
        result["protocol"] = json!({ "players": players, "tape": tape, "messages": run.messages, "output": run.output });
    }
    if cfg.sketch.is_none() && cfg.protocol.is_none() {
        return Err(config_err("simulate needs a sketch path or a [protocol] section"));
    }
    result["mismatches"] = json!(mismatches);
    Ok(if mismatches.is_empty() {
        Outcome::passed(result)
    } else {
        Outcome::failed(mismatches.join("; "), result)
    })
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TemplateResult {
    n: usize,
    s: usize,
    p: u32,
    block_bits: u32,
    block_count: u64,
    seed_bits: usize,
    updates: usize,
    state: Vec<u32>,
    matches_explicit: bool,
    matches_sorted: bool,
    permutations: usize,
    order_invariant: bool,
}

pub fn prg_check_cmd(ctx: &RunContext, _out: &Path) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let spec = cfg.prg.clone().unwrap_or_default();
    let tol = ctx.tolerance.unwrap_or(DEFAULT_DISTANCE_TOLERANCE);
    let b = spec.block_bits;
    if b == 0 || b > linsketch::prg::MAX_FSM_BLOCK_BITS {
        return Err(config_err(format!("block_bits must lie in 1..={}", linsketch::prg::MAX_FSM_BLOCK_BITS)));
    }
    if spec.states == 0 {
        return Err(config_err("states must be positive"));
    }
    let states = spec.states;
    let fsm = match spec.machine.as_str() {
        "parity" => BlockFsm::from_fn(states, b, 0, |s, v| (s + (v.count_ones() as usize & 1)) % states),
        "sum" => BlockFsm::from_fn(states, b, 0, |s, v| (s + v as usize) % states),
        other => return Err(config_err(format!("unknown machine {other:?}; use parity or sum"))),
    }
    .map_err(|e| config_err(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let distance = fsm_distance(&fsm, spec.block_count, spec.samples, &mut rng).map_err(|e| config_err(e.to_string()))?;
    let mut failures = Vec::new();
    if distance.distance > tol {
        failures.push(format!("L1 distance {} above {tol}", distance.distance));
    }

    let template = match &spec.sketch {
        None => None,
        Some(t) => {
            if t.p < 2 || t.n == 0 || t.s == 0 {
                return Err(config_err("template needs n >= 1, s >= 1 and p >= 2"));
            }
            let template = match &t.generator_seed {
                Some(hex_seed) => {
                    let bytes = hex::decode(hex_seed).map_err(|e| config_err(format!("generator_seed: {e}")))?;
                    let per_row = (t.s as u64 * (32 - (t.p - 1).leading_zeros()) as u64).div_ceil(b as u64).max(1);
                    let count = (t.n as u64 * per_row).next_power_of_two();
                    let generator = NisanGenerator::from_seed_bytes(b, count, &bytes).map_err(|e| config_err(e.to_string()))?;
                    SketchTemplate::new(t.n, t.s, t.p, generator)
                }
                None => SketchTemplate::random(t.n, t.s, t.p, b, &mut rng),
            }
            .map_err(|e| config_err(e.to_string()))?;
            let mut updates: Vec<Update> = match &t.stream {
                Some(path) => {
                    let path = cfg.resolve(path);
                    let file = StreamFile::read(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                    if file.n != t.n || file.p != t.p {
                        return Err(config_err("stream header differs from the template's n and p"));
                    }
                    file.updates
                }
                None => (0..10 * t.n)
                    .map(|_| Update::new(rng.gen_range(0..t.n), rng.gen_range(-(t.p as i64)..=t.p as i64)))
                    .collect(),
            };
            let state = derandomized_apply(&template, &updates).map_err(|e| anyhow!(e))?;
            let x = accumulate(t.n, t.p, &updates);
            let rows: Vec<Vec<u32>> = (0..t.n).map(|i| template.row(i)).collect::<Result<_, _>>().map_err(|e| anyhow!(e))?;
            let explicit: Vec<u32> = (0..t.s)
                .map(|r| ((0..t.n).map(|i| rows[i][r] as u64 * x[i] as u64).sum::<u64>() % t.p as u64) as u32)
                .collect();
            let matches_sorted = derandomized_apply_sorted(&template, &updates).map_err(|e| anyhow!(e))? == state;
            let mut order_invariant = true;
            for _ in 0..t.permutations {
                updates.shuffle(&mut rng);
                order_invariant &= derandomized_apply(&template, &updates).map_err(|e| anyhow!(e))? == state;
            }
            let res = TemplateResult {
                n: t.n,
                s: t.s,
                p: t.p,
                block_bits: b,
                block_count: template.generator.block_count(),
                seed_bits: NisanGenerator::seed_bits(b, template.generator.block_count()).map_err(|e| anyhow!(e))?,
                updates: updates.len(),
                matches_explicit: state == explicit,
                state,
                matches_sorted,
                permutations: t.permutations,
                order_invariant,
            };
            if !(res.matches_explicit && res.matches_sorted && res.order_invariant) {
                failures.push("derandomized sketch disagrees with the explicit matrix or depends on update order".into());
            }
            Some(res)
        }
    };
    let result = json!({
        "machine": spec.machine,
        "states": states,
        "block_bits": b,
        "block_count": spec.block_count,
        "seed_bits": NisanGenerator::seed_bits(b, spec.block_count).map_err(|e| anyhow!(e))?,
        "tolerance": tol,
        "distance": distance,
        "template": template,
    });
    Ok(if failures.is_empty() {
        Outcome::passed(result)
    } else {
        Outcome::failed(failures.join("; "), result)
    })
}

pub fn zoo_list() -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{:<9} {:<20} {:<26} description", "kind", "name", "parameters")?;
        for e in zoo::list() {
            writeln!(out, "{:<9} {:<20} {:<26} {}", e.kind, e.name, e.params, e.summary)?;
        }
        Ok(())
    };
    match write() {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        bail!("{} exists and is not a directory", dir.display());
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
