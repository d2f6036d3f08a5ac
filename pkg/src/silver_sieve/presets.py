"""Named settings: reference constants and the desk-scale benchmark."""
from .dataset import SynthConfig
from .o2u import REFERENCE_SCHEDULE, CyclicalSchedule
from .selector import SelectionConfig
from .trainer import TrainConfig

# Values reported for the TACRED / Wiki80 experiments.
TACRED_ETA = 0.05
WIKI80_ETA = 0.07
M_SEARCH = tuple(range(100, 1301, 100))
TACRED_NOISE_RATIO = 0.1667
WIKI80_NOISE_RATIO = 0.5888
TACRED_SILVER_ACCURACY = 0.5750
TACRED_CLEAN_ACCURACY = 0.8042
NL_REFERENCE = TrainConfig(loss_kind="nl", learning_rate=4e-7, epochs=10)
O2U_REFERENCE = REFERENCE_SCHEDULE

# Desk benchmark: 10 skewed classes (largest:smallest about 20:1), 30 % symmetric noise.
BENCHMARK_SEEDS = (0, 1, 2, 3, 4)


def benchmark_synth(seed: int) -> SynthConfig:
    return SynthConfig(
        num_classes=10,
        feature_dim=16,
        mean_separation=3.0,
        power_law=1.3,
        n_samples=2000,
        noise_ratio=0.3,
        noise_mode="symmetric",
        seed=seed,
        with_text=True,
    )


def benchmark_train(loss_kind: str, seed: int) -> TrainConfig:
    return TrainConfig(loss_kind=loss_kind, learning_rate=0.01, epochs=10, batch_size=32, seed=seed)


BENCHMARK_SELECTION = SelectionConfig(eta=TACRED_ETA, m=100)
BENCHMARK_O2U = CyclicalSchedule()

# Input for `silver-sieve pipeline --preset desk`.
DESK_PIPELINE = {
    "seed": 0,
    "synth": {
        "classes": 10,
        "power_law": 1.3,
        "n": 2000,
        "dim": 16,
        "separation": 3.0,
        "noise": 0.3,
        "noise_mode": "symmetric",
        "with_text": True,
    },
    "detector": "grad",
    "loss": "iwnl",
    "epochs": 10,
    "lr": 0.01,
    "batch_size": 32,
    "eta": TACRED_ETA,
    "m": 100,
    "bins": 10,
}
