//! Run a small sweep from an inline config and read back the manifest.

use kpo::config::RunConfig;
use kpo::sweep;

fn main() -> kpo::Result<()> {
    let cfg = RunConfig::from_toml(
        r#"
experiment = "usdist-map"

[model]
g3 = 1e-3
g4 = 1e-7
dim = 60

[control]
min = 10.0
max = 10.0

[grid]
g3_min = 1e-4
g3_max = 1e-2
g3_count = 4
g4_min = 1e-8
g4_max = 1e-6
g4_count = 3
"#,
    )?;
    let out = std::env::temp_dir().join("kpo-run-config-example");
    let m = sweep::run(&cfg, &out, false)?;
    m.verify_files(&out)?;
    for p in &m.points {
        let d = p.values.get("distance").map_or("-".to_string(), |d| format!("{d:.4e}"));
        println!("{:60} {:8} {d}", p.key, p.status.as_str());
    }
    println!("all ok: {}, output in {}", m.all_ok(), out.display());
    Ok(())
}
