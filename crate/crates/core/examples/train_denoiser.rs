//! Train the point classifier on synthetic rooms, save and reload the
//! checkpoint, then denoise a held-out room. Run with `--release`.

use radar_pcd::cloud::FeaturedCloud;
use radar_pcd::corpus::{synthetic_corpus, CorpusParams, PointKind};
use radar_pcd::rdm::{denoise, read_checkpoint, train_with_progress, write_checkpoint, DenoiseParams, TrainConfig};

fn main() -> radar_pcd::error::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(12);
    let scenes = synthetic_corpus(11, 9, &CorpusParams::default())?;
    let clouds = |s: &[radar_pcd::corpus::SyntheticScene]| -> Vec<FeaturedCloud> {
        s.iter().flat_map(|x| [x.nca.clone(), x.saa.clone()]).collect()
    };
    let config = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let outcome = train_with_progress(&clouds(&scenes[..6]), &clouds(&scenes[6..8]), &config, |m| {
        println!("epoch {:>2}  train {:.4}  val {:.4}  f1 {:.3}", m.epoch, m.train_loss, m.val_loss, m.val_f1)
    })?;

    let path = std::env::temp_dir().join("radar-pcd-example.rdmc");
    write_checkpoint(&outcome.model, &path)?;
    let model = read_checkpoint(&path)?;
    println!("checkpoint {} (best epoch {})", path.display(), outcome.best_epoch);

    let held_out = &scenes[8];
    let bare = |c: &FeaturedCloud| FeaturedCloud::from_rows(c.provenance(), c.data().to_vec()).expect("valid rows");
    let kept = denoise(&model, &bare(&held_out.nca), &bare(&held_out.saa), &DenoiseParams::default())?;
    let kept: std::collections::HashSet<[u64; 3]> = kept.positions().iter().map(|p| p.map(f64::to_bits)).collect();
    for kind in [PointKind::Wall, PointKind::Noise, PointKind::Ghost] {
        let (mut total, mut survived) = (0, 0);
        for (cloud, kinds) in [(&held_out.nca, &held_out.nca_kinds), (&held_out.saa, &held_out.saa_kinds)] {
            for (i, k) in kinds.iter().enumerate() {
                if *k == kind {
                    total += 1;
                    survived += usize::from(kept.contains(&cloud.position(i).map(f64::to_bits)));
                }
            }
        }
        println!("{kind:?}: kept {survived} of {total}");
    }
    Ok(())
}
