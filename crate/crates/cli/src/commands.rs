use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use bundlesplit::app_model::{parse_package, serialize_package, AppPackage};
use bundlesplit::corpus::{gen_app, gen_scripts, gen_usage, CorpusParams};
use bundlesplit::decomposer::{
    decompose as split, pack_bundle, rewrite_launch_sites, Bundle, DecomposeError,
    DecompositionPlan, PlanDocument, WhiteList,
};
use bundlesplit::graphs::to_dot;
use bundlesplit::recovery::{parse_script, recover as repair, serialize_script, RecoveryError};
use bundlesplit::usage::{select_base_activities, UsageDataset};
use bundlesplit::vruntime::{
    BundleStore, HttpStore, PlanStore, RuntimeError, VirtualDevice,
};
use serde::Serialize;

use crate::{
    CmdResult, DecomposeArgs, Failure, GenArgs, GraphArgs, RecoverArgs, SimulateArgs,
    EXIT_INVALID, EXIT_NON_TERMINATION, EXIT_STORE,
};

pub const PLAN_FILE: &str = "plan.json";
pub const APP_FILE: &str = "app.apkg";
pub const REPORT_FILE: &str = "recovery-report.json";

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    Ok(fs::read(path).with_context(|| format!("reading {}", path.display()))?)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).context("encoding JSON")?;
    bytes.push(b'\n');
    write(path, &bytes)
}

fn load_app(path: &Path) -> Result<AppPackage, Failure> {
    Ok(parse_package(&read(path)?).with_context(|| format!("parsing {}", path.display()))?)
}

pub fn load_plan(dir: &Path) -> Result<DecompositionPlan, Failure> {
    let path = dir.join(PLAN_FILE);
    let doc: PlanDocument = serde_json::from_slice(&read(&path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(doc.plan)
}

fn decompose_failure(e: DecomposeError) -> Failure {
    match e {
        DecomposeError::InvalidSelection(_)
        | DecomposeError::InvalidWhitelist(_)
        | DecomposeError::ActivityInBase(_) => Failure::new(EXIT_INVALID, e),
        other => Failure::new(crate::EXIT_IO, other),
    }
}

/// Writes the bundles, `plan.json` and a copy of the original package.
fn write_plan_dir(dir: &Path, app: &AppPackage, plan: &DecompositionPlan) -> CmdResult {
    let rewritten = rewrite_launch_sites(app, plan);
    let pack = |b: Bundle| pack_bundle(&b, &rewritten).map_err(decompose_failure);
    write(&dir.join("base.abundle"), &pack(Bundle::Base(plan.base.clone()))?)?;
    let features = dir.join("features");
    if features.exists() {
        fs::remove_dir_all(&features).with_context(|| format!("clearing {}", features.display()))?;
    }
    for (activity, feature) in &plan.features {
        write(
            &features.join(format!("{activity}.abundle")),
            &pack(Bundle::Feature(feature.clone()))?,
        )?;
    }
    write(&dir.join(APP_FILE), &serialize_package(app))?;
    write_json(&dir.join(PLAN_FILE), &PlanDocument::new(plan.clone()))
}

pub fn decompose(args: DecomposeArgs) -> CmdResult {
    let app = load_app(&args.app)?;
    let sel: BTreeSet<String> = match (&args.base_activities, &args.usage, args.coverage) {
        (Some(list), _, _) => list
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        (None, Some(usage), Some(coverage)) => {
            let ds = UsageDataset::read_csv(read(usage)?.as_slice())
                .with_context(|| format!("reading {}", usage.display()))?;
            select_base_activities(&ds, &app, coverage).map_err(|e| Failure::new(EXIT_INVALID, e))?
        }
        _ => {
            return Err(Failure::new(
                EXIT_INVALID,
                anyhow::anyhow!("give --base-activities or --usage with --coverage"),
            ))
        }
    };
    let whitelist = match &args.whitelist {
        Some(path) => serde_json::from_slice::<WhiteList>(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(|e| Failure::new(EXIT_INVALID, e))?,
        None => WhiteList::default(),
    };
    let plan = split(&app, &sel, &whitelist).map_err(decompose_failure)?;
    write_plan_dir(&args.out, &app, &plan)?;
    log::info!(
        "{}: base {} bytes of {}, {} feature bundles",
        plan.app_id,
        plan.base.size_bytes,
        plan.original_size,
        plan.features.len()
    );
    println!("{}", serde_json::to_string(&PlanDocument::new(plan)).context("encoding plan")?);
    Ok(())
}

fn script_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "script"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn recover(args: RecoverArgs) -> CmdResult {
    let app = load_app(&args.plan.join(APP_FILE))?;
    let plan = load_plan(&args.plan)?;
    let mut scripts = Vec::new();
    for path in script_files(&args.scripts)? {
        let mut script = parse_script(&read(&path)?)
            .with_context(|| path.display().to_string())
            .map_err(|e| Failure::new(EXIT_INVALID, e))?;
        if let Some(stem) = path.file_stem() {
            script.name = stem.to_string_lossy().into_owned();
        }
        scripts.push(script);
    }
    let (plan, report) = repair(&app, &plan, &scripts).map_err(|e| match e {
        RecoveryError::NonTermination { .. } => Failure::new(EXIT_NON_TERMINATION, e),
        RecoveryError::MalformedScript { .. } | RecoveryError::InvalidScript(_) => {
            Failure::new(EXIT_INVALID, e)
        }
        other => Failure::new(crate::EXIT_IO, other),
    })?;
    write_plan_dir(&args.plan, &app, &plan)?;
    write_json(&args.plan.join(REPORT_FILE), &report)?;
    println!("{}", serde_json::to_string(&report).context("encoding report")?);
    Ok(())
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    schema: u32,
    app_id: &'a str,
    script: &'a str,
    metrics: bundlesplit::vruntime::RunMetrics,
}

fn runtime_failure(e: RuntimeError) -> Failure {
    match e {
        RuntimeError::StoreUnavailable(_) => Failure::new(EXIT_STORE, e),
        RuntimeError::InvalidScript(_) | RuntimeError::NoMatchingActivity(_) => {
            Failure::new(EXIT_INVALID, e)
        }
        other => Failure::new(crate::EXIT_IO, other),
    }
}

pub fn simulate(args: SimulateArgs) -> CmdResult {
    let (store, app_id): (Box<dyn BundleStore>, String) = match (&args.plan, &args.store_url) {
        (Some(dir), None) => {
            let app_id = match &args.app_id {
                Some(id) => id.clone(),
                None => load_plan(dir)?.app_id,
            };
            (Box::new(PlanStore::new(&app_id, dir)), app_id)
        }
        (None, Some(url)) => {
            let app_id = args
                .app_id
                .clone()
                .ok_or_else(|| Failure::new(EXIT_INVALID, anyhow::anyhow!("--store-url needs --app-id")))?;
            (Box::new(HttpStore::new(url)), app_id)
        }
        _ => {
            return Err(Failure::new(
                EXIT_INVALID,
                anyhow::anyhow!("give exactly one of --plan and --store-url"),
            ))
        }
    };
    let script = parse_script(&read(&args.script)?)
        .with_context(|| args.script.display().to_string())
        .map_err(|e| Failure::new(EXIT_INVALID, e))?;

    let mut device = match &args.device {
        Some(path) if path.exists() => serde_json::from_slice::<VirtualDevice>(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        _ => VirtualDevice::with_stub_slots(args.stub_slots),
    };
    if device.state(&app_id).is_none() {
        device.install_base(store.as_ref(), &app_id).map_err(runtime_failure)?;
    }
    if !args.prefetch.is_empty() {
        device
            .prefetch(store.as_ref(), &app_id, &args.prefetch)
            .map_err(runtime_failure)?;
    }
    let metrics = device
        .run_session(store.as_ref(), &app_id, &script)
        .map_err(runtime_failure)?;
    if let Some(path) = &args.device {
        write_json(path, &device)?;
    }
    let report = SimulationReport {
        schema: 1,
        app_id: &app_id,
        script: &script.name,
        metrics,
    };
    match &args.report {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).context("encoding metrics")?),
    }
    Ok(())
}

pub fn gen(args: GenArgs) -> CmdResult {
    let params = match &args.params {
        Some(path) => serde_json::from_slice::<CorpusParams>(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(|e| Failure::new(EXIT_INVALID, e))?,
        None => CorpusParams::default(),
    };
    params.validate().map_err(|e| Failure::new(EXIT_INVALID, e))?;
    write_json(&args.out.join("params.json"), &params)?;
    for index in 0..args.count {
        let app = gen_app(&params, index).map_err(|e| Failure::new(EXIT_INVALID, e))?;
        let dir = args.out.join(&app.app_id);
        write(&dir.join(APP_FILE), &serialize_package(&app))?;
        for script in gen_scripts(&app) {
            write(
                &dir.join("scripts").join(format!("{}.script", script.name)),
                &serialize_script(&script),
            )?;
        }
        let usage = gen_usage(&params, &app).map_err(|e| Failure::new(EXIT_INVALID, e))?;
        let mut csv = Vec::new();
        usage.write_csv(&mut csv).context("encoding usage log")?;
        write(&dir.join("usage.csv"), &csv)?;
    }
    log::info!("wrote {} packages to {}", args.count, args.out.display());
    Ok(())
}

pub fn graph(args: GraphArgs) -> CmdResult {
    let app = load_app(&args.app)?;
    print!("{}", to_dot(&app));
    Ok(())
}
