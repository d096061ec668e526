//! A reduced-size run of simulation preset 1, printed as a CDP(FDP) table.
//!
//!     cargo run --release --example simulation [M] [K]

use wamdf::sim::run_preset_table;

fn main() -> wamdf::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer"));
    let m = args.next().unwrap_or(300);
    let k = args.next().unwrap_or(50);
    let table = run_preset_table(1, &[1.0, 3.0, 5.0], m, k, 7)?;
    table.write_tsv(std::io::stdout().lock())
}
