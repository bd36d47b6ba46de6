//! Command-line front door for the announcement toolkit: the balancing
//! codec, single announcement exchanges over a simulated medium, pairing
//! scenarios, attack comparisons, and the exhaustive receiver-parameter
//! sweep.
//!
//! Exit codes: 0 success, 2 bad input or config, 3 the exhaustive sweep
//! disagreed with the closed-form vulnerability boundary.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tep_core::adversary::{self, Strategy};
use tep_core::bitbalance;
use tep_core::bits::BitString;
use tep_core::explorer::{check_predicate, explore_with, ExplorerParams, PredicateTable};
use tep_core::medium::{Medium, SimConfig, Visibility};
use tep_core::pairing::{
    find_skew_adversary_secret, run_attack_matrix, run_pbc, run_tep, Outcome, Role, RunResult,
    Scenario,
};
use tep_core::receiver::{receive_tea, ReceiverConfig};
use tep_core::sender::{self, send_tea, TxSchedule};
use tep_core::tea_frame::{build_tea, Direction, FrameConfig, TeaFrame};
use tep_core::util::DetRng;

use config::{input_error, parse_bits, CliError, FileConfig};
use report::{json_line, ticks_to_ms, OutDir, RunManifest};

const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tep",
    version,
    about = "Deterministic simulator and verifier for tamper-evident wireless announcements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Balance a 0/1 string into its equal-ones-and-zeros code.
    Balance(BalanceArgs),
    /// Invert a balanced code back to the original bits.
    Unbalance(UnbalanceArgs),
    /// Build one announcement frame and report its exact timing.
    EncodeTea(EncodeTeaArgs),
    /// Run one announcement exchange over a simulated medium.
    SimulateTea(SimulateTeaArgs),
    /// Sweep receiver parameters and check the vulnerability boundary.
    Explore(ExploreArgs),
    /// Run one pairing scenario and print per-node outcomes.
    Pair(PairArgs),
    /// Compare both pairing protocols against the standard attacks.
    AttackMatrix(AttackMatrixArgs),
}

#[derive(Args)]
struct BalanceArgs {
    /// Bit string to balance, e.g. 1000.
    bits: String,
}

#[derive(Args)]
struct UnbalanceArgs {
    /// Balanced code produced by the balance command.
    code: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Request,
    Reply,
}

impl DirectionArg {
    fn direction(self) -> Direction {
        match self {
            DirectionArg::Request => Direction::Request,
            DirectionArg::Reply => Direction::Reply,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DirectionArg::Request => "request",
            DirectionArg::Reply => "reply",
        }
    }
}

#[derive(Args)]
struct EncodeTeaArgs {
    /// Payload bits; generated from the seed when omitted.
    #[arg(long)]
    payload: Option<String>,
    #[arg(long, value_enum, default_value_t = DirectionArg::Request)]
    direction: DirectionArg,
    /// Use the production frame profile (128-bit payload, hashed digest).
    #[arg(long)]
    production: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write frame.json and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateTeaArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Payload bits; generated from the seed when omitted.
    #[arg(long)]
    payload: Option<String>,
    /// Write trace.jsonl and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inclusive range shorthand applied to m, threshold, and skew, e.g. 1..6.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated hash lengths to sweep, e.g. 2,4,6.
    #[arg(long)]
    hash_lengths: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write predicate.csv, counterexamples.jsonl, and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProtocolArg {
    /// Push-button baseline without announcements.
    Pbc,
    /// Announcement-protected pairing.
    Tep,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long, value_enum, default_value_t = ProtocolArg::Tep)]
    protocol: ProtocolArg,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write summary.csv, trace.jsonl, and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackMatrixArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write matrix.csv and a run manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Balance(args) => cmd_balance(args),
        Command::Unbalance(args) => cmd_unbalance(args),
        Command::EncodeTea(args) => cmd_encode_tea(args),
        Command::SimulateTea(args) => cmd_simulate_tea(args),
        Command::Explore(args) => cmd_explore(args),
        Command::Pair(args) => cmd_pair(args),
        Command::AttackMatrix(args) => cmd_attack_matrix(args),
    }
}

// ---------------------------------------------------------------------------
// Codec commands
// ---------------------------------------------------------------------------

fn cmd_balance(args: &BalanceArgs) -> Result<ExitCode, CliError> {
    let bits = parse_bits("input", &args.bits)?;
    if bits.is_empty() || bits.len() % 2 != 0 {
        return Err(input_error(format!(
            "length must be even: input is {} bits",
            bits.len()
        )));
    }
    let trace = bitbalance::balance(&bits).map_err(|e| input_error(e.to_string()))?;
    println!("{}", trace.output);
    println!("flips: {}", trace.flip_count);
    println!(
        "count_tail: {}",
        trace.output.slice(bits.len()..trace.output.len())
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_unbalance(args: &UnbalanceArgs) -> Result<ExitCode, CliError> {
    let code = parse_bits("code", &args.code)?;
    let bits = bitbalance::unbalance(&code).map_err(|e| input_error(e.to_string()))?;
    println!("{bits}");
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// Announcement commands
// ---------------------------------------------------------------------------

fn resolve_payload(
    arg: Option<&str>,
    len_bits: usize,
    seed: u64,
) -> Result<BitString, CliError> {
    match arg {
        Some(s) => {
            let bits = parse_bits("payload", s)?;
            if bits.len() != len_bits {
                return Err(input_error(format!(
                    "payload is {} bits, this frame profile carries {}",
                    bits.len(),
                    len_bits
                )));
            }
            Ok(bits)
        }
        None => Ok(random_bits(seed, len_bits)),
    }
}

fn random_bits(seed: u64, len: usize) -> BitString {
    let mut rng = DetRng::new(seed);
    BitString::from_bools((0..len).map(|_| rng.next_u64() & 1 == 1).collect())
}

fn complement(bits: &BitString) -> BitString {
    BitString::from_bools(bits.iter().map(|b| !b).collect())
}

fn cmd_encode_tea(args: &EncodeTeaArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let sim = file.sim.resolve()?;
    let frame_cfg = if args.production {
        FrameConfig::production(&sim)
    } else {
        FrameConfig::test_scale(&sim, file.frame.bits(16)?)
    };
    let payload = resolve_payload(args.payload.as_deref(), frame_cfg.payload_len_bits, args.seed)?;
    let frame = build_tea(&payload, args.direction.direction(), &frame_cfg, &sim)
        .map_err(|e| input_error(e.to_string()))?;

    println!("direction: {}", args.direction.name());
    println!("payload: {}", frame.payload);
    println!("slots: {}", frame.slots);
    println!("num_slots: {}", frame.num_slots());
    println!("tick_us: {}", sim.tick_us);
    println!("slot_ticks: {}", frame.slot_ticks);
    println!("slot_phase_ticks: {}", frame.slot_phase_ticks());
    println!(
        "slot_phase_ms: {}",
        ticks_to_ms(frame.slot_phase_ticks(), sim.tick_us)
    );
    println!("reservation_ticks: {}", frame.reservation_ticks);
    println!(
        "reservation_ms: {}",
        ticks_to_ms(frame.reservation_ticks, sim.tick_us)
    );
    println!("reservation_cap_ticks: {}", sim.reservation_cap_ticks);
    println!("total_ticks: {}", frame.total_ticks());
    println!("total_ms: {}", ticks_to_ms(frame.total_ticks(), sim.tick_us));

    if let Some(out) = &args.out {
        let manifest = RunManifest::new(
            "encode-tea",
            args.config.as_deref(),
            args.seed,
            out,
            json!({
                "production": args.production,
                "direction": args.direction.name(),
                "payload": payload.to_string(),
            }),
        );
        let dir = OutDir::create(out, &manifest)?;
        let text = serde_json::to_string_pretty(&frame).expect("frame serializes");
        dir.write_text("frame.json", &format!("{text}\n"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate_tea(args: &SimulateTeaArgs) -> Result<ExitCode, CliError> {
    const SENDER: u32 = 1;
    const RECEIVER: u32 = 2;

    let file = FileConfig::load(args.config.as_deref())?;
    let sim = file.sim.resolve()?;
    let rx = file.receiver.resolve();
    let tx_cfg = file.sender.resolve();
    let bits = file.frame.bits(16)?;
    let frame_cfg = FrameConfig::test_scale(&sim, bits);
    let payload = resolve_payload(args.payload.as_deref(), bits, args.seed)?;
    let frame = build_tea(&payload, Direction::Request, &frame_cfg, &sim)
        .map_err(|e| input_error(e.to_string()))?;

    let adversary_id = file.adversary.as_ref().map(|a| a.id).unwrap_or(9);
    let mut nodes = vec![SENDER, RECEIVER];
    let strategy = match &file.adversary {
        Some(section) => {
            nodes.push(adversary_id);
            Some(section.strategy(&complement(&payload))?)
        }
        None => None,
    };
    let mut medium = Medium::new(nodes);

    let mut lines = String::new();
    lines.push_str(&json_line(&json!({
        "record": "config",
        "frame_bits": bits,
        "seed": args.seed,
        "payload": payload.to_string(),
    })));

    if let Some(Strategy::Hog { duration_ticks }) = &strategy {
        adversary::hog_channel(&mut medium, adversary_id, 0, *duration_ticks);
        lines.push_str(&json_line(&json!({
            "record": "attack",
            "label": "hog",
            "duration_ticks": duration_ticks,
        })));
    }

    let schedule = send_tea(&mut medium, SENDER, &frame, &tx_cfg, &sim, 0, Visibility::All);
    lines.push_str(&json_line(&json!({
        "record": "tx_schedule",
        "schedule": schedule,
    })));

    if let Some(strategy) = &strategy {
        let forged = complement(&payload);
        for label in apply_attack(
            &mut medium,
            adversary_id,
            strategy,
            &forged,
            &frame,
            &schedule,
            &frame_cfg,
            &rx,
            &sim,
        )? {
            lines.push_str(&json_line(&json!({ "record": "attack", "label": label })));
        }
    }

    let guard = sender::self_monitor(&schedule, medium.timeline(SENDER));
    lines.push_str(&json_line(&json!({
        "record": "sender_guard",
        "overlap": guard,
    })));

    match receive_tea(&medium, RECEIVER, 0, &frame_cfg, &rx, &sim) {
        Some(reception) => lines.push_str(&json_line(&json!({
            "record": "reception",
            "reception": reception,
        }))),
        None => lines.push_str(&json_line(&json!({
            "record": "reception",
            "heard": false,
        }))),
    }

    print!("{lines}");
    if let Some(out) = &args.out {
        let manifest = RunManifest::new(
            "simulate-tea",
            args.config.as_deref(),
            args.seed,
            out,
            json!({
                "frame_bits": bits,
                "payload": payload.to_string(),
                "strategy": file.adversary.as_ref().map(|a| a.strategy.clone()),
            }),
        );
        let dir = OutDir::create(out, &manifest)?;
        dir.write_text("trace.jsonl", &lines)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Apply one attacker behavior to an announcement already on the medium.
/// Returns trace labels for what actually happened.
#[allow(clippy::too_many_arguments)]
fn apply_attack(
    medium: &mut Medium,
    adversary_id: u32,
    strategy: &Strategy,
    forged: &BitString,
    frame: &TeaFrame,
    schedule: &TxSchedule,
    frame_cfg: &FrameConfig,
    rx: &ReceiverConfig,
    sim: &SimConfig,
) -> Result<Vec<&'static str>, CliError> {
    let twin = |payload: &BitString| {
        build_tea(payload, frame.direction, frame_cfg, sim).map_err(|e| input_error(e.to_string()))
    };
    Ok(match strategy {
        Strategy::Passive | Strategy::Hog { .. } => vec![],
        Strategy::PayloadEdit { payload } => {
            adversary::edit_payload(medium, schedule, payload.clone());
            vec!["payload_edit"]
        }
        Strategy::OffSlotEnergy => {
            adversary::energize_off_slot(medium, adversary_id, schedule, &frame.slots);
            vec!["off_slot_energy"]
        }
        Strategy::Collide => {
            let own = twin(forged)?;
            sender::emit_tea_at(
                medium,
                adversary_id,
                &own,
                schedule.sync_start,
                1.0,
                Visibility::All,
            );
            vec!["collide"]
        }
        Strategy::Capture { power } => {
            let own = twin(forged)?;
            sender::emit_tea_at(
                medium,
                adversary_id,
                &own,
                schedule.sync_start,
                *power,
                Visibility::All,
            );
            vec!["capture"]
        }
        Strategy::Impersonate { payload } => {
            let own = twin(payload)?;
            sender::emit_tea_at(
                medium,
                adversary_id,
                &own,
                schedule.slot_phase_end + sim.difs_ticks,
                1.0,
                Visibility::All,
            );
            vec!["impersonate"]
        }
        Strategy::SkewShift => {
            if skew_shift_attack(medium, adversary_id, forged, frame, schedule, frame_cfg, rx, sim)? {
                vec!["skew_shift"]
            } else {
                adversary::edit_payload(medium, schedule, forged.clone());
                vec!["skew_shift_fallback_edit"]
            }
        }
    })
}

/// Try the window-schedule rewrite; reports false when no schedule exists
/// for this receiver configuration and forged payload.
#[allow(clippy::too_many_arguments)]
fn skew_shift_attack(
    medium: &mut Medium,
    adversary_id: u32,
    forged: &BitString,
    frame: &TeaFrame,
    schedule: &TxSchedule,
    frame_cfg: &FrameConfig,
    rx: &ReceiverConfig,
    sim: &SimConfig,
) -> Result<bool, CliError> {
    if rx.threshold >= sim.window_ticks {
        return Ok(false);
    }
    let target = build_tea(forged, frame.direction, frame_cfg, sim)
        .map_err(|e| input_error(e.to_string()))?;
    let plan = match adversary::skew_shift_schedule(
        &frame.slots,
        &[target.slots.clone()],
        sim.window_ticks,
        rx.threshold,
        rx.skew_ticks,
    ) {
        Ok(plan) => plan,
        Err(_) => return Ok(false),
    };
    if adversary::apply_window_schedule(
        medium,
        adversary_id,
        schedule.slot_phase_start,
        rx.skew_ticks,
        &plan.added,
        sim,
    )
    .is_err()
    {
        return Ok(false);
    }
    adversary::edit_payload(medium, schedule, forged.clone());
    Ok(true)
}

// ---------------------------------------------------------------------------
// Exploration
// ---------------------------------------------------------------------------

fn cmd_explore(args: &ExploreArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let grid = config::resolve_grid(&file.grid, args.grid.as_deref(), args.hash_lengths.as_deref())?;
    let rx = file.receiver.resolve();
    let table = check_predicate(&grid, rx.tie_break, rx.occupancy);
    let csv = predicate_csv(&table);
    print!("{csv}");

    let mismatches = table.mismatches();
    for row in &mismatches {
        eprintln!(
            "mismatch: hash_length={} m={} threshold={} skew={} predicted={} found={}",
            row.hash_length, row.m, row.threshold, row.skew, row.predicted, row.found
        );
    }

    if let Some(out) = &args.out {
        let manifest = RunManifest::new(
            "explore",
            args.config.as_deref(),
            args.seed,
            out,
            json!({
                "hash_lengths": grid.hash_lengths,
                "ms": grid.ms,
                "thresholds": grid.thresholds,
                "skews": grid.skews,
                "tie_break": rx.tie_break,
                "occupancy": rx.occupancy,
            }),
        );
        let dir = OutDir::create(out, &manifest)?;
        dir.write_text("predicate.csv", &csv)?;
        dir.write_text(
            "counterexamples.jsonl",
            &counterexample_lines(&table, &rx),
        )?;
    }

    if mismatches.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_MISMATCH))
    }
}

fn predicate_csv(table: &PredicateTable) -> String {
    let mut out = String::from("hash_length,m,threshold,skew,predicted,found,n_counterexamples\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.hash_length, r.m, r.threshold, r.skew, r.predicted, r.found, r.n_counterexamples
        ));
    }
    out
}

/// One representative counterexample per vulnerable cell. Cells with huge
/// counterexample populations are skipped rather than materialized.
fn counterexample_lines(table: &PredicateTable, rx: &ReceiverConfig) -> String {
    const EXAMPLE_CAP: u64 = 100_000;
    let mut out = String::new();
    for row in table.rows.iter().filter(|r| r.found) {
        let cell = json!({
            "hash_length": row.hash_length,
            "m": row.m,
            "threshold": row.threshold,
            "skew": row.skew,
        });
        if row.n_counterexamples > EXAMPLE_CAP {
            out.push_str(&json_line(&json!({
                "cell": cell,
                "example_skipped": true,
            })));
            continue;
        }
        let params = ExplorerParams {
            hash_length: row.hash_length,
            m: row.m,
            threshold: row.threshold,
            skew: row.skew,
        };
        let first = explore_with(&params, rx.tie_break, rx.occupancy)
            .into_iter()
            .next()
            .expect("a found cell has at least one counterexample");
        out.push_str(&json_line(&json!({
            "cell": cell,
            "example": first,
        })));
    }
    out
}

// ---------------------------------------------------------------------------
// Pairing
// ---------------------------------------------------------------------------

fn cmd_pair(args: &PairArgs) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut sc = config::resolve_scenario(&file, args.seed)?;

    if let Some(section) = &file.adversary {
        let wants_grind = section.grind_secret
            && matches!(
                sc.adversary.as_ref().map(|a| &a.strategy),
                Some(Strategy::SkewShift)
            );
        if wants_grind {
            match find_skew_adversary_secret(&sc) {
                Some(secret) => {
                    sc.adversary.as_mut().expect("adversary present").secret = secret;
                    eprintln!("note: adversary secret {secret} admits a window schedule");
                }
                None => eprintln!(
                    "note: no adversary secret admits a window schedule; keeping {}",
                    section.secret
                ),
            }
        }
    }

    let result = match args.protocol {
        ProtocolArg::Tep => run_tep(&sc),
        ProtocolArg::Pbc => run_pbc(&sc),
    };
    let csv = summary_csv(&sc, &result);
    print!("{csv}");

    if let Some(out) = &args.out {
        let protocol = match args.protocol {
            ProtocolArg::Tep => "tep",
            ProtocolArg::Pbc => "pbc",
        };
        let manifest = RunManifest::new(
            "pair",
            args.config.as_deref(),
            args.seed,
            out,
            json!({ "protocol": protocol, "scenario": sc }),
        );
        let dir = OutDir::create(out, &manifest)?;
        dir.write_text("summary.csv", &csv)?;
        let mut trace = String::new();
        for event in &result.events {
            trace.push_str(&json_line(event));
        }
        dir.write_text("trace.jsonl", &trace)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn summary_csv(sc: &Scenario, result: &RunResult) -> String {
    let mut out = String::from("node,role,outcome,peer_public,shared\n");
    for (node, outcome) in &result.outcomes {
        let role = sc
            .nodes
            .iter()
            .find(|n| n.id == *node)
            .map(|n| match n.role {
                Role::Enrollee => "enrollee",
                Role::Registrar => "registrar",
            })
            .unwrap_or("unknown");
        let (peer, shared) = match outcome {
            Outcome::Paired {
                peer_public,
                shared,
            } => (peer_public.to_string(), shared.to_string()),
            Outcome::AdversaryPaired {
                adversary_public,
                shared,
            } => (adversary_public.to_string(), shared.to_string()),
            _ => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            node,
            role,
            report::outcome_name(outcome),
            peer,
            shared
        ));
    }
    out
}

fn cmd_attack_matrix(args: &AttackMatrixArgs) -> Result<ExitCode, CliError> {
    let rows = run_attack_matrix(args.seed);
    let mut csv = String::from("protocol,attack,outcome\n");
    for cell in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            report::protocol_name(cell.protocol),
            report::attack_name(cell.attack),
            report::outcome_name(&cell.outcome)
        ));
    }
    print!("{csv}");

    if let Some(out) = &args.out {
        let manifest = RunManifest::new(
            "attack-matrix",
            None,
            args.seed,
            out,
            json!({ "attacks": ["collision", "capture", "timing_control"] }),
        );
        let dir = OutDir::create(out, &manifest)?;
        dir.write_text("matrix.csv", &csv)?;
    }
    Ok(ExitCode::SUCCESS)
}
