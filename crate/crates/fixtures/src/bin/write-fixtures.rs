//! Writes the scenario evidence files into a directory (default: current).

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    let c = artiscope_fixtures::contracts();
    let d = artiscope_fixtures::dropper();
    for (name, bytes) in [
        (c.eml_name, &c.eml),
        ("Contracts.pdf.exe", &c.pe),
        ("capture.pcap", &d.pcap),
        ("loader.js", &d.script),
        ("update.exe", &d.pe),
    ] {
        std::fs::write(dir.join(name), bytes)?;
        println!("{}", dir.join(name).display());
    }
    Ok(())
}
