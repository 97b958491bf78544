"""A tiny two-camera experiment that runs the full matrix in about a second."""

_DET = {"hidden": [2], "context": 2, "epochs": 1}

SMALL = {
    "schema_version": 1,
    "seed": 3,
    "n_frames": 60,
    "split_ratio": 0.5,
    "validation_fraction": 0.2,
    "cameras": {
        "cam1": {"height": 8, "width": 12, "margin": 2, "max_shift": 2,
                 "window_rows": [1, 3], "texture_period": 6},
        "cam2": {"height": 8, "width": 12, "margin": 2, "max_shift": 2,
                 "window_rows": [2, 5], "texture_period": 8, "passengers": [0, 1]},
    },
    "attacks": {
        "block": {"n_instances": 3},
        "zoom": {"n_instances": 3},
        "blur": {"n_instances": 3, "kernel_size": 3},
        "shift": {"n_instances": 3, "dx": 2},
    },
    "detectors": {
        "predictor": dict(_DET),
        "interpolator": dict(_DET),
        "vae": dict(_DET, latent_channels=2),
        "ae": dict(_DET),
    },
}
