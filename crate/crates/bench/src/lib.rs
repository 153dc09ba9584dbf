//! Fixed scenarios shared by the benchmarks.

use afterpulse_qkd::{ChannelModel, IntensitySet, IsoQberGrid, ProtocolParams, ReceiverModel, Scenario};

pub fn receiver(p_ap: f64, intrinsic_error: f64) -> ReceiverModel {
    ReceiverModel::builder()
        .identical_detectors(2, p_ap)
        .intrinsic_error(intrinsic_error)
        .build()
        .expect("fixture receiver is valid")
}

/// 50 km of fiber, 0.8% afterpulsing, 2% intrinsic error.
pub fn metro_link() -> Scenario {
    Scenario {
        receiver: receiver(0.008, 0.02),
        channel: ChannelModel::from_loss_db(10.5).expect("valid loss"),
        intensities: IntensitySet::weak_vacuum(0.48, 0.05).expect("valid intensities"),
        protocol: ProtocolParams::default(),
    }
}

/// `n` by `n` nodes over afterpulse probability and intrinsic error in [0, 0.1].
pub fn square_grid(n: usize) -> IsoQberGrid {
    let axis: Vec<f64> = (0..n).map(|k| 0.1 * k as f64 / (n - 1) as f64).collect();
    IsoQberGrid { afterpulse_probs: axis.clone(), intrinsic_errors: axis }
}
