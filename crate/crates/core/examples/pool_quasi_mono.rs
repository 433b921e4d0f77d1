//! Pools a triphone-state stream onto quasi-monophone states.

use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::likelihood::pool_quasi_mono;

fn main() -> kwspot::Result<()> {
    let c = Corpus::generate(&CorpusConfig::triphone().with_minutes(0.1))?;
    let map = c.inventory.quasi_state_map()?;
    let pooled = pool_quasi_mono(&c.matrix, &map)?;
    println!(
        "{} frames: {} triphone states -> {} quasi-monophone states",
        c.matrix.num_frames(),
        c.matrix.num_states(),
        pooled.num_states()
    );
    let (t, q) = (100, 5);
    let sources: Vec<usize> = (0..map.num_source_states()).filter(|&s| map.target_of(s) as usize == q).collect();
    let max = sources.iter().map(|&s| c.matrix.get(t, s)).fold(f32::NEG_INFINITY, f32::max);
    println!("frame {t}, state {q}: max over {} sources = {max}, pooled = {}", sources.len(), pooled.get(t, q));
    Ok(())
}
