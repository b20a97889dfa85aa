//! Published full-scale results on the EEGEyeNet absolute-position task.
//! They are comparison targets for documentation; the synthetic desk-scale
//! runs here do not reproduce them.

/// (model, mean RMSE mm, std) over five runs.
pub const BASELINES: [(&str, f64, f64); 8] = [
    ("Naive Guessing", 123.3, 0.0),
    ("KNN", 119.7, 0.0),
    ("RBF SVR", 123.0, 0.0),
    ("Linear Regression", 118.3, 0.0),
    ("Random Forest", 116.7, 0.1),
    ("CNN", 70.4, 1.1),
    ("EEGViT (Pre-trained)", 55.4, 0.2),
    ("EEGViT-TCNet", 51.8, 0.6),
];

/// Largest inference speedup reported for a coarser patch projection.
pub const PATCH_SPEEDUP: f64 = 4.32;
