"""Published reference statistics for the 12-species benchmark dataset.

Used as fixtures: slice-count bookkeeping, split-balance coefficients of
variation, and the per-species precision/recall/F1 of the four ensemble
configurations.
"""

# Species in benchmark order (descending specimen count).
SPECIES = (
    "Chrysalidina",
    "Ataxophragmium",
    "Baculogypsina",
    "Minoxia",
    "Elphidiella",
    "Fallotia",
    "Arumella",
    "Lockhartia",
    "Orbitoides",
    "Rhapydionina",
    "Alveolina",
    "Coskinolina",
)

SPECIES_ALPHA = tuple(sorted(SPECIES))

# species -> (specimen count, train slices, val slices, test slices)
DATASET_COUNTS = {
    "Chrysalidina":   (16, 3782, 1079, 5111),
    "Ataxophragmium": (7,  3943, 993,  4898),
    "Baculogypsina":  (7,  2243, 997,  2980),
    "Minoxia":        (6,  4156, 1034, 3557),
    "Elphidiella":    (6,  4048, 1012, 3385),
    "Fallotia":       (6,  4102, 987,  5009),
    "Arumella":       (5,  3597, 1143, 2163),
    "Lockhartia":     (5,  3899, 1234, 5359),
    "Orbitoides":     (5,  3705, 1074, 5015),
    "Rhapydionina":   (5,  3743, 1186, 3802),
    "Alveolina":      (4,  3535, 1724, 5129),
    "Coskinolina":    (4,  3350, 1583, 5060),
}

SPLIT_TOTALS = {"train": 44103, "val": 14046, "test": 51468}
GRAND_TOTAL = 109617

# split -> published balance CV in percent
REFERENCE_CV = {"train": 13.91, "val": 20.58, "test": 24.72}

ENSEMBLE_METHODS = ("patched", "top2", "top3", "top4")

# method -> species -> F1
ENSEMBLE_F1 = {
    "patched": {
        "Alveolina": 0.973, "Arumella": 0.987, "Ataxophragmium": 0.992,
        "Baculogypsina": 0.752, "Chrysalidina": 0.958, "Coskinolina": 0.982,
        "Elphidiella": 0.976, "Fallotia": 0.997, "Lockhartia": 0.984,
        "Minoxia": 0.941, "Orbitoides": 0.872, "Rhapydionina": 0.983,
    },
    "top2": {
        "Alveolina": 0.970, "Arumella": 0.968, "Ataxophragmium": 0.991,
        "Baculogypsina": 0.389, "Chrysalidina": 0.952, "Coskinolina": 0.950,
        "Elphidiella": 0.951, "Fallotia": 0.998, "Lockhartia": 0.984,
        "Minoxia": 0.972, "Orbitoides": 0.778, "Rhapydionina": 0.977,
    },
    "top3": {
        "Alveolina": 0.974, "Arumella": 0.983, "Ataxophragmium": 0.995,
        "Baculogypsina": 0.366, "Chrysalidina": 0.974, "Coskinolina": 0.963,
        "Elphidiella": 0.969, "Fallotia": 0.993, "Lockhartia": 0.995,
        "Minoxia": 0.989, "Orbitoides": 0.770, "Rhapydionina": 0.972,
    },
    "top4": {
        "Alveolina": 0.968, "Arumella": 0.987, "Ataxophragmium": 0.994,
        "Baculogypsina": 0.588, "Chrysalidina": 0.974, "Coskinolina": 0.965,
        "Elphidiella": 0.973, "Fallotia": 0.996, "Lockhartia": 0.998,
        "Minoxia": 0.985, "Orbitoides": 0.804, "Rhapydionina": 0.977,
    },
}

ENSEMBLE_F1_AVERAGE = {"patched": 0.950, "top2": 0.907, "top3": 0.912, "top4": 0.934}

ENSEMBLE_PRECISION = {
    "patched": {
        "Alveolina": 0.950, "Arumella": 0.993, "Ataxophragmium": 0.996,
        "Baculogypsina": 0.999, "Chrysalidina": 0.920, "Coskinolina": 0.979,
        "Elphidiella": 0.956, "Fallotia": 0.994, "Lockhartia": 0.968,
        "Minoxia": 0.992, "Orbitoides": 0.827, "Rhapydionina": 0.990,
    },
    "top2": {
        "Alveolina": 0.946, "Arumella": 0.997, "Ataxophragmium": 0.992,
        "Baculogypsina": 0.972, "Chrysalidina": 0.915, "Coskinolina": 0.975,
        "Elphidiella": 0.910, "Fallotia": 0.997, "Lockhartia": 0.970,
        "Minoxia": 0.973, "Orbitoides": 0.684, "Rhapydionina": 0.995,
    },
    "top3": {
        "Alveolina": 0.952, "Arumella": 0.999, "Ataxophragmium": 0.996,
        "Baculogypsina": 0.957, "Chrysalidina": 0.951, "Coskinolina": 0.976,
        "Elphidiella": 0.943, "Fallotia": 0.987, "Lockhartia": 0.990,
        "Minoxia": 0.987, "Orbitoides": 0.666, "Rhapydionina": 0.996,
    },
    "top4": {
        "Alveolina": 0.938, "Arumella": 0.999, "Ataxophragmium": 0.996,
        "Baculogypsina": 0.985, "Chrysalidina": 0.950, "Coskinolina": 0.982,
        "Elphidiella": 0.950, "Fallotia": 0.994, "Lockhartia": 0.996,
        "Minoxia": 0.988, "Orbitoides": 0.723, "Rhapydionina": 0.991,
    },
}

ENSEMBLE_PRECISION_AVERAGE = {
    "patched": 0.964, "top2": 0.944, "top3": 0.950, "top4": 0.958,
}

ENSEMBLE_RECALL = {
    "patched": {
        "Alveolina": 0.997, "Arumella": 0.981, "Ataxophragmium": 0.989,
        "Baculogypsina": 0.603, "Chrysalidina": 0.999, "Coskinolina": 0.986,
        "Elphidiella": 0.996, "Fallotia": 0.999, "Lockhartia": 1.000,
        "Minoxia": 0.895, "Orbitoides": 0.922, "Rhapydionina": 0.976,
    },
    "top2": {
        "Alveolina": 0.994, "Arumella": 0.941, "Ataxophragmium": 0.989,
        "Baculogypsina": 0.243, "Chrysalidina": 0.993, "Coskinolina": 0.927,
        "Elphidiella": 0.995, "Fallotia": 1.000, "Lockhartia": 0.999,
        "Minoxia": 0.970, "Orbitoides": 0.900, "Rhapydionina": 0.960,
    },
    "top3": {
        "Alveolina": 0.998, "Arumella": 0.968, "Ataxophragmium": 0.994,
        "Baculogypsina": 0.226, "Chrysalidina": 0.997, "Coskinolina": 0.950,
        "Elphidiella": 0.996, "Fallotia": 0.999, "Lockhartia": 1.000,
        "Minoxia": 0.990, "Orbitoides": 0.913, "Rhapydionina": 0.949,
    },
    "top4": {
        "Alveolina": 0.999, "Arumella": 0.976, "Ataxophragmium": 0.992,
        "Baculogypsina": 0.419, "Chrysalidina": 0.998, "Coskinolina": 0.949,
        "Elphidiella": 0.998, "Fallotia": 0.999, "Lockhartia": 1.000,
        "Minoxia": 0.982, "Orbitoides": 0.905, "Rhapydionina": 0.963,
    },
}

ENSEMBLE_RECALL_AVERAGE = {
    "patched": 0.945, "top2": 0.909, "top3": 0.915, "top4": 0.932,
}


# Standalone (F1, precision, recall) triples reported for the two hardest
# species across the four ensemble configurations.
DIFFICULT_SPECIES_METRICS = {
    "Baculogypsina": {
        "patched": (0.752, 0.999, 0.603),
        "top2": (0.389, 0.972, 0.243),
        "top3": (0.366, 0.957, 0.227),
        "top4": (0.588, 0.985, 0.419),
    },
    "Orbitoides": {
        "patched": (0.872, 0.827, 0.922),
        "top2": (0.777, 0.684, 0.900),
        "top3": (0.770, 0.666, 0.913),
        "top4": (0.804, 0.723, 0.905),
    },
}


def train_counts() -> list[int]:
    return [DATASET_COUNTS[s][1] for s in SPECIES]


def val_counts() -> list[int]:
    return [DATASET_COUNTS[s][2] for s in SPECIES]


def test_counts() -> list[int]:
    return [DATASET_COUNTS[s][3] for s in SPECIES]
