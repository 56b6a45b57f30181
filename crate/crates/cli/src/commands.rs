use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gradcodec::distfit::{fit_lognormal_with_quantile, fit_report};
use gradcodec::encode::{
    compression_ratio, decode_stream, encode_stream, read_stream, write_stream, SymbolCounts,
};
use gradcodec::fpquant::{
    allocation_csv, allocation_errors, allocation_table, optimal_allocation, quantize_tensor,
};
use gradcodec::mcsim::{
    cosine_csv, cosine_grid, relerr_csv, relerr_grid, sparsity_csv, sparsity_grid, SimConfig,
    DEFAULT_PRUNE_SAMPLES, DEFAULT_RELERR_SAMPLES,
};
use gradcodec::prune::{
    analytic_cosine, bimodal_threshold, heterogeneous_allocate, predict_and_prune,
    sparsity_given_threshold, threshold_for_sparsity, LayerProfile, PruneRequest,
};
use gradcodec::tensorio::{read_mask, read_tensor, write_tensor, TensorDump};
use serde_json::json;

use crate::args::{
    AllocateArgs, Cli, Command, DecodeArgs, EncodeArgs, FitArgs, FpoptArgs, PruneArgs,
    QuantizeArgs, SigmaSpec, SimArgs, SimulateCommand, ThresholdArgs,
};
use crate::output::{json_err, write_file, Sink};
use crate::Failure;

pub fn run(cli: Cli) -> Result<(), Failure> {
    let sink = Sink {
        report: cli.report,
        json_only: cli.json,
    };
    match cli.command {
        Command::Fit(a) => fit(a, &sink),
        Command::Fpopt(a) => fpopt(a, &sink),
        Command::Quantize(a) => quantize(a, &sink),
        Command::Threshold(a) => threshold(a, &sink),
        Command::Prune(a) => prune(a, &sink),
        Command::Allocate(a) => allocate(a, &sink),
        Command::Encode(a) => encode(a, &sink),
        Command::Decode(a) => decode(a, &sink),
        Command::Simulate(s) => simulate(s, &sink),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(v).map_err(json_err)
}

fn fit(a: FitArgs, sink: &Sink) -> Result<(), Failure> {
    let dump = read_tensor(&a.tensor)?;
    let samples: Vec<f64> = dump.values.iter().map(|v| *v as f64).collect();
    let lognormal = fit_lognormal_with_quantile(&samples, a.quantile)?;
    let ranking = fit_report(&samples, &a.families);

    let mut s = format!(
        "lognormal fit: mu {:.6} sigma {:.6} k {:.4} (n = {})\n",
        lognormal.mu,
        lognormal.sigma,
        lognormal.k,
        samples.len()
    );
    let _ = writeln!(s, "{:<12} {:>12} {:<10} params", "family", "ks_stat", "values");
    for r in &ranking.reports {
        let params: Vec<String> = r.params.iter().map(|p| format!("{p:.6}")).collect();
        let _ = writeln!(
            s,
            "{:<12} {:>12.6} {:<10} {}",
            r.family.name(),
            r.ks_stat,
            serde_json::to_value(r.convention).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
            params.join(" ")
        );
    }
    for f in &ranking.failures {
        let _ = writeln!(s, "{:<12} failed: {}", f.family.name(), f.message);
    }
    sink.emit(
        "fit",
        &s,
        json!({
            "tensor": a.tensor,
            "layer_id": dump.layer_id,
            "count": samples.len(),
            "quantile": a.quantile,
            "lognormal": to_json(&lognormal)?,
            "reports": to_json(&ranking.reports)?,
            "failures": to_json(&ranking.failures)?,
        }),
    )
}

fn fpopt(a: FpoptArgs, sink: &Sink) -> Result<(), Failure> {
    let (lo, hi, step) = match a.sigma {
        SigmaSpec::Value(v) => (v, v, 1.0),
        SigmaSpec::Range { lo, hi, step } => (lo, hi, step),
    };
    let rows = allocation_table(lo, hi, step, &a.bits, a.prior)?;
    let mut s = String::new();
    let mut tables = Vec::new();
    if let SigmaSpec::Value(sigma) = a.sigma {
        for &bits in &a.bits {
            let best = optimal_allocation(sigma, bits, a.prior)?;
            let errors = allocation_errors(sigma, bits, a.prior)?;
            let _ = writeln!(s, "{best}");
            let _ = writeln!(s, "  sigma {sigma} N {bits} prior {}", a.prior);
            let _ = writeln!(s, "  {:<8} {:>14}", "format", "expected_error");
            for (f, e) in &errors {
                let mark = if *f == best { " *" } else { "" };
                let _ = writeln!(s, "  {:<8} {:>14.9}{mark}", f.to_string(), e);
            }
            tables.push(json!({
                "sigma": sigma,
                "bits": bits,
                "best": best.to_string(),
                "errors": errors
                    .iter()
                    .map(|(f, e)| json!({"format": f.to_string(), "expected_error": e}))
                    .collect::<Vec<_>>(),
            }));
        }
    } else {
        let _ = writeln!(s, "{:>8} {:>3} {:<8} {:>14}", "sigma", "N", "format", "expected_error");
        for r in &rows {
            let _ = writeln!(
                s,
                "{:>8.3} {:>3} 1-{}-{:<4} {:>14.9}",
                r.sigma, r.bits, r.n2, r.n1, r.expected_error
            );
        }
    }
    if let Some(out) = &a.out {
        write_file(out, allocation_csv(&rows).as_bytes())?;
        let _ = writeln!(s, "wrote {}", out.display());
    }
    sink.emit(
        "fpopt",
        &s,
        json!({
            "prior": a.prior.to_string(),
            "rows": to_json(&rows)?,
            "errors": tables,
            "csv": a.out,
        }),
    )
}

fn quantize(a: QuantizeArgs, sink: &Sink) -> Result<(), Failure> {
    let dump = read_tensor(&a.tensor)?;
    let q = quantize_tensor(&dump.values, a.format, a.scale.0)?;
    let mut s = format!(
        "{} elements to {} (scale 2^{}): mean relative error {:.6}, overflow {}, underflow {}\n",
        dump.values.len(),
        q.format,
        q.scale_log2,
        q.stats.mean_relative_error,
        q.stats.overflow_count,
        q.stats.underflow_count
    );
    if let Some(out) = &a.out {
        let mut values = Vec::with_capacity(q.values.len());
        for (i, v) in q.values.iter().enumerate() {
            let f = *v as f32;
            if f as f64 != *v {
                return Err(Failure::Domain(format!(
                    "quantized value {v:e} at index {i} is not exactly representable in the f32 output"
                )));
            }
            values.push(f);
        }
        let mut outdump = TensorDump::new(values);
        outdump.layer_id = dump.layer_id.clone();
        outdump.metadata = dump.metadata.clone();
        outdump.metadata.insert("format".into(), q.format.to_string());
        outdump.metadata.insert("scale_log2".into(), q.scale_log2.to_string());
        write_tensor(&outdump, out)?;
        let _ = writeln!(s, "wrote {}", out.display());
    }
    sink.emit(
        "quantize",
        &s,
        json!({
            "tensor": a.tensor,
            "format": q.format.to_string(),
            "scale": to_json(&a.scale.0)?,
            "scale_log2": q.scale_log2,
            "count": q.values.len(),
            "stats": to_json(&q.stats)?,
            "out": a.out,
        }),
    )
}

fn threshold(a: ThresholdArgs, sink: &Sink) -> Result<(), Failure> {
    let left = a.left_ratio.unwrap_or(0.0);
    let (alpha, achieved) = match a.left_ratio {
        Some(l) => {
            let p = gradcodec::distfit::LognormalParams::new(a.mu, a.sigma, a.k)?;
            let alpha = bimodal_threshold(a.sparsity, l, &p)?;
            (alpha, l + (1.0 - l) * sparsity_given_threshold(alpha, a.mu, a.sigma)?)
        }
        None => {
            let alpha = threshold_for_sparsity(a.sparsity, a.mu, a.sigma)?;
            (alpha, sparsity_given_threshold(alpha, a.mu, a.sigma)?)
        }
    };
    let cos = analytic_cosine(alpha * (-a.mu).exp(), a.sigma, a.k)?;
    let s = format!(
        "alpha {alpha:e}\nround trip: sparsity {achieved:.9} (target {}, gap {:.1e})\npredicted cosine {cos:.6} (k {})\n",
        a.sparsity,
        (achieved - a.sparsity).abs(),
        a.k
    );
    sink.emit(
        "threshold",
        &s,
        json!({
            "mu": a.mu,
            "sigma": a.sigma,
            "k": a.k,
            "target_sparsity": a.sparsity,
            "left_ratio": left,
            "alpha": alpha,
            "round_trip_sparsity": achieved,
            "analytic_cos": cos,
        }),
    )
}

fn mask_path(a: &PruneArgs, dump: &TensorDump) -> Option<PathBuf> {
    if a.no_mask {
        return None;
    }
    if let Some(m) = &a.mask {
        return Some(m.clone());
    }
    let name = dump.metadata.get("mask")?;
    let dir = a.tensor.parent().unwrap_or(Path::new(""));
    Some(dir.join(name))
}

fn prune(a: PruneArgs, sink: &Sink) -> Result<(), Failure> {
    let dump = read_tensor(&a.tensor)?;
    let mask_file = mask_path(&a, &dump);
    let mask = mask_file.as_ref().map(read_mask).transpose()?;
    let req = PruneRequest {
        target_sparsity: a.sparsity,
        seed: a.seed,
        params: None,
    };
    let (pruned, report) = predict_and_prune(&dump.values, &req, mask.as_ref())?;

    let mut out = TensorDump::new(pruned);
    out.layer_id = dump.layer_id.clone();
    out.metadata = dump.metadata.clone();
    out.metadata.remove("mask");
    out.metadata.insert("alpha".into(), (report.alpha as f32).to_string());
    out.metadata.insert("seed".into(), a.seed.to_string());
    out.metadata.insert("target_sparsity".into(), a.sparsity.to_string());
    write_tensor(&out, &a.out)?;

    let mut s = format!(
        "alpha {:e}: sparsity {:.6} (target {}), seed {}\n",
        report.alpha, report.achieved_sparsity, a.sparsity, a.seed
    );
    let _ = writeln!(
        s,
        "fit: mu {:.6} sigma {:.6} k {:.4}, left ratio {:.6}",
        report.params.mu, report.params.sigma, report.params.k, report.left_ratio
    );
    let _ = writeln!(
        s,
        "cosine: analytic {:.6}, empirical {}",
        report.cosine.analytic_cos,
        report
            .cosine
            .empirical_cos
            .map_or("n/a".to_owned(), |c| format!("{c:.6}"))
    );
    let _ = writeln!(s, "wrote {}", a.out.display());
    let mut body = to_json(&report)?;
    if let Some(obj) = body.as_object_mut() {
        obj.insert("tensor".into(), json!(a.tensor));
        obj.insert("mask".into(), json!(mask_file));
        obj.insert("out".into(), json!(a.out));
    }
    sink.emit("prune", &s, body)
}

fn allocate(a: AllocateArgs, sink: &Sink) -> Result<(), Failure> {
    let raw = std::fs::read(&a.layers).map_err(|source| gradcodec::Error::Io {
        path: a.layers.clone(),
        source,
    })?;
    let layers: Vec<LayerProfile> = serde_json::from_slice(&raw)
        .map_err(|e| Failure::Domain(format!("malformed layers file {}: {e}", a.layers.display())))?;
    let alloc = heterogeneous_allocate(&layers, a.sparsity, a.max_cap, a.seed)?;
    let mut s = format!(
        "{:<16} {:>5} {:>12} {:>9} {:>12} {:>9}\n",
        "layer", "depth", "n", "sparsity", "alpha", "cosine"
    );
    for l in &alloc.layers {
        let flag = match (l.cosine_bound, l.capped) {
            (true, _) => " floor",
            (_, true) => " capped",
            _ => "",
        };
        let _ = writeln!(
            s,
            "{:<16} {:>5} {:>12} {:>9.6} {:>12.4e} {:>9.6}{flag}",
            l.layer_id, l.depth_rank, l.n, l.spec.target_sparsity, l.spec.alpha, l.analytic_cos
        );
    }
    let _ = writeln!(
        s,
        "overall sparsity {:.9} (target {})",
        alloc.overall_sparsity, alloc.target_sparsity
    );
    if let Some(w) = &alloc.warning {
        let _ = writeln!(s, "warning: {w}");
    }
    let mut body = to_json(&alloc)?;
    if let Some(obj) = body.as_object_mut() {
        obj.insert("seed".into(), json!(a.seed));
        obj.insert("max_cap".into(), json!(a.max_cap));
    }
    sink.emit("allocate", &s, body)
}

fn encode(a: EncodeArgs, sink: &Sink) -> Result<(), Failure> {
    let dump = read_tensor(&a.tensor)?;
    let alpha = match a.alpha {
        Some(v) => v,
        None => dump
            .metadata
            .get("alpha")
            .ok_or_else(|| Failure::Usage("--alpha is required when the tensor has no alpha metadata".into()))?
            .parse()
            .map_err(|_| Failure::Domain("tensor alpha metadata is not a number".into()))?,
    };
    let stream = encode_stream(&dump.values, alpha, a.width)?;
    write_stream(&stream, &a.out)?;
    let counts = SymbolCounts::of(&dump.values, alpha);
    let ratio = compression_ratio(counts, a.width)?;
    let s = format!(
        "{} values: {} zeros, {} at ±alpha, {} passthrough\n{} bits, {:.4} bits/value\nwrote {}\n",
        counts.total(),
        counts.zeros,
        counts.alphas,
        counts.passthrough,
        stream.bit_len,
        ratio,
        a.out.display()
    );
    sink.emit(
        "encode",
        &s,
        json!({
            "tensor": a.tensor,
            "alpha": alpha,
            "width": a.width,
            "counts": to_json(&counts)?,
            "bit_len": stream.bit_len,
            "bits_per_value": ratio,
            "out": a.out,
        }),
    )
}

fn decode(a: DecodeArgs, sink: &Sink) -> Result<(), Failure> {
    let stream = read_stream(&a.stream)?;
    let values = decode_stream(&stream)?;
    let mut dump = TensorDump::new(values);
    dump.metadata.insert("alpha".into(), stream.alpha.to_string());
    write_tensor(&dump, &a.out)?;
    let s = format!(
        "{} values (alpha {}, width {}) to {}\n",
        stream.count,
        stream.alpha,
        stream.width,
        a.out.display()
    );
    sink.emit(
        "decode",
        &s,
        json!({
            "stream": a.stream,
            "alpha": stream.alpha,
            "width": stream.width,
            "count": stream.count,
            "out": a.out,
        }),
    )
}

fn sim_base(sim: &SimArgs, default_samples: usize) -> SimConfig {
    SimConfig::new(0.0, 1.0, sim.samples.unwrap_or(default_samples), sim.seed).repetitions(sim.repetitions)
}

fn simulate(cmd: SimulateCommand, sink: &Sink) -> Result<(), Failure> {
    let (kind, csv, rows, sim) = match cmd {
        SimulateCommand::Relerr { sigma, bits, sim } => {
            let rows = relerr_grid(&sigma, &bits, &sim_base(&sim, DEFAULT_RELERR_SAMPLES))?;
            ("relerr", relerr_csv(&rows), to_json(&rows)?, sim)
        }
        SimulateCommand::Sparsity {
            sigma,
            mu,
            sparsity,
            sim,
        } => {
            let rows = sparsity_grid(&sigma, &mu, &sparsity, &sim_base(&sim, DEFAULT_PRUNE_SAMPLES))?;
            ("sparsity", sparsity_csv(&rows), to_json(&rows)?, sim)
        }
        SimulateCommand::Cosine {
            sigma,
            k,
            sparsity,
            sim,
        } => {
            let rows = cosine_grid(&sigma, k, &sparsity, &sim_base(&sim, DEFAULT_PRUNE_SAMPLES))?;
            ("cosine", cosine_csv(&rows), to_json(&rows)?, sim)
        }
    };
    let summary = match &sim.out {
        Some(out) => {
            write_file(out, csv.as_bytes())?;
            format!("wrote {} rows to {}\n", csv.lines().count() - 1, out.display())
        }
        None => csv,
    };
    sink.emit(
        &format!("simulate.{kind}"),
        &summary,
        json!({
            "seed": sim.seed,
            "samples": sim.samples,
            "repetitions": sim.repetitions,
            "rows": rows,
            "csv": sim.out,
        }),
    )
}
