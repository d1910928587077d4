use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use council::field::{PrimeField, MERSENNE_61};
use council::maintenance::reform;
use council::phase2::verify_partition;
use council::sim::{audit_secrecy, load_scenario, SimState, StateDump};
use council::threshold::{reconstruct, split_secret, Secret, Share, ThresholdPolicy};

#[derive(Parser)]
#[command(name = "council", version, about = "Council-based clustering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the initial topology of a scenario and print the partition.
    Form {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run a scenario and write the per-round metrics CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the share field prime.
        #[arg(long)]
        prime: Option<u64>,
        /// Write the final state (partition, shares, adversary) as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Write the maintenance decision log as JSON lines.
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
    /// Re-run the secrecy audit on a state dump.
    Audit {
        #[arg(long)]
        state: PathBuf,
    },
    /// Field-level share utilities.
    Shares {
        #[command(subcommand)]
        op: SharesOp,
    },
}

#[derive(Subcommand)]
enum SharesOp {
    /// Split a secret for the council members with the given x-coordinates.
    Split {
        #[arg(long)]
        secret: u64,
        #[arg(long)]
        k: usize,
        /// Comma-separated share x-coordinates (usually node ids).
        #[arg(long, value_delimiter = ',', required = true)]
        xs: Vec<u64>,
        #[arg(long, default_value_t = MERSENNE_61)]
        prime: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recover a secret from a JSON array of shares (argument or stdin).
    Reconstruct {
        #[arg(long)]
        shares: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
}

enum Failure {
    Input(String),
    Invariant(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Form { scenario } => {
            let s = load_scenario(&scenario)?;
            let t = s.initial_topology();
            let p = reform(&t)?;
            println!("{}", serde_json::to_string_pretty(&p)?);
            let v = verify_partition(&t, &p);
            if !v.is_empty() {
                return Err(Failure::Invariant(format!("partition invariants broken: {}", v[0])));
            }
            Ok(())
        }
        Command::Simulate { scenario, out, seed, prime, dump, decisions } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if prime.is_some() {
                s.field_prime = prime;
            }
            s.validate()?;
            let mut st = SimState::initialize(&s)?;
            st.run_to_end();
            let report = st.report();
            let file = std::fs::File::create(&out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
            report.write_csv(std::io::BufWriter::new(file))?;
            if let Some(path) = dump {
                std::fs::write(path, serde_json::to_string_pretty(&st.dump())?)?;
            }
            if let Some(path) = decisions {
                let lines: Vec<String> =
                    st.decisions.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
                std::fs::write(path, lines.join("\n") + if lines.is_empty() { "" } else { "\n" })?;
            }
            eprintln!(
                "{} rounds, {} updates, {} reforms, {} hellos",
                st.round, st.updates, st.reforms, st.hellos
            );
            for m in st.violations.iter().chain(&st.anomalies) {
                eprintln!("{m}");
            }
            if st.exit_code() != 0 {
                return Err(Failure::Invariant(match &st.halted {
                    Some(h) => format!("halted: {h}"),
                    None => "invariant violation during run".into(),
                }));
            }
            Ok(())
        }
        Command::Audit { state } => {
            let text = std::fs::read_to_string(&state)
                .map_err(|e| Failure::Input(format!("{}: {e}", state.display())))?;
            let dump: StateDump = serde_json::from_str(&text)?;
            let audit = audit_secrecy(&dump.ledger, &dump.adversary);
            println!("{}", serde_json::to_string_pretty(&audit)?);
            let anomalies = audit.anomalies();
            if !anomalies.is_empty() {
                return Err(Failure::Invariant(anomalies.join("; ")));
            }
            Ok(())
        }
        Command::Shares { op } => shares(op),
    }
}

fn shares(op: SharesOp) -> Result<(), Failure> {
    match op {
        SharesOp::Split { secret, k, xs, prime, seed } => {
            let field = PrimeField::new(prime)?;
            if !field.contains(secret) {
                return Err(Failure::Input(format!("secret {secret} is not below the prime {prime}")));
            }
            let policy = ThresholdPolicy::unrestricted(xs.len(), k)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shares = split_secret(Secret(secret), policy, &xs, &field, &mut rng)?;
            println!("{}", serde_json::to_string(&shares)?);
            Ok(())
        }
        SharesOp::Reconstruct { shares, k } => {
            let text = match shares {
                Some(s) => s,
                None => {
                    let mut buf = String::new();
                    std::io::stdin().read_to_string(&mut buf)?;
                    buf
                }
            };
            let shares: Vec<Share> = serde_json::from_str(&text)?;
            let first = shares.first().ok_or_else(|| Failure::Input("no shares given".into()))?;
            let field = PrimeField::new(first.p)?;
            let k = k.unwrap_or(first.k);
            let secret = reconstruct(&shares, k, &field)?;
            println!("{}", secret.0);
            Ok(())
        }
    }
}
