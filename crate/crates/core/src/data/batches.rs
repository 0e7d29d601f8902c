use super::SequenceStream;
use crate::{rng, Error, Result};
use rand::seq::index::sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Stream order, never crossing a sequence boundary.
    Sequential,
    /// `seq_count` sequences drawn without replacement, then `frame_count` distinct
    /// window centers in each; reproducible per `(seed, epoch)`.
    Sampled {
        seed: u64,
        epoch: u64,
        seq_count: usize,
        frame_count: usize,
    },
}

/// Frames of one sequence, as positions into `SequenceStream::frames`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub sequence: String,
    pub positions: Vec<usize>,
}

pub fn iter_batches(
    stream: &SequenceStream,
    batch_size: usize,
    mode: BatchMode,
) -> Result<std::vec::IntoIter<Batch>> {
    if batch_size == 0 {
        return Err(Error::Configuration("batch_size must be at least 1".into()));
    }
    if stream.is_empty() {
        return Err(Error::Data("cannot batch an empty stream".into()));
    }
    let spans = stream.sequences();
    let mut batches = Vec::new();
    match mode {
        BatchMode::Sequential => {
            for span in &spans {
                for chunk in span.range().collect::<Vec<_>>().chunks(batch_size) {
                    batches.push(Batch {
                        sequence: span.name.clone(),
                        positions: chunk.to_vec(),
                    });
                }
            }
        }
        BatchMode::Sampled {
            seed,
            epoch,
            seq_count,
            frame_count,
        } => {
            if seq_count == 0 || frame_count == 0 {
                return Err(Error::Configuration("sampled batches need seq_count, frame_count >= 1".into()));
            }
            let mut rng = rng::stream(rng::mix(seed, epoch), 0xBA7C);
            let chosen = sample(&mut rng, spans.len(), seq_count.min(spans.len()));
            for s in chosen.iter() {
                let span = &spans[s];
                let mut centers = sample(&mut rng, span.len, frame_count.min(span.len)).into_vec();
                centers.sort_unstable();
                let positions: Vec<usize> = centers.into_iter().map(|c| span.start + c).collect();
                for chunk in positions.chunks(batch_size) {
                    batches.push(Batch {
                        sequence: span.name.clone(),
                        positions: chunk.to_vec(),
                    });
                }
            }
        }
    }
    Ok(batches.into_iter())
}
