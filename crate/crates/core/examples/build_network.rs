//! Builds decoding networks from a phone inventory and a keyword list in
//! all three filler modes.

use kwspot::model::{parse_keyword_list, FillerMode, Network, PhonemeInventory};

fn main() -> kwspot::Result<()> {
    let inv = PhonemeInventory::new(&["a", "d", "e", "i", "n", "o", "p", "r", "t", "v"], &["sil"], 3)?;
    let list = parse_keyword_list(
        "davida,david,d a v i d a\ndavide,david,d a v i d e\npraha,praha,p r a h a\nted,ted,t e d\n",
        "keywords",
        &inv,
        4,
    );
    // "praha" uses an unknown phone.
    println!("with an unknown phone: {}", list.unwrap_err());

    let list = parse_keyword_list("davida,david,d a v i d a\ndavide,david,d a v i d e\nted,ted,t e d\n", "keywords", &inv, 4)?;
    for r in &list.rejected {
        println!("rejected line {}: {} ({})", r.line, r.form, r.reason);
    }
    for mode in [FillerMode::Monophone, FillerMode::QuasiMonophone, FillerMode::Triphone] {
        let net = Network::build(&inv, &list.entries, mode)?;
        println!(
            "{mode:>9}: {} fillers, {} keywords, {} states per frame",
            net.filler_units().len(),
            net.keyword_units().len(),
            net.num_states
        );
    }
    Ok(())
}
