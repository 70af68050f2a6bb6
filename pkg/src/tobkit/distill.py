"""Teacher-student distillation of the spectral transcoder.

The teacher is the composition mel-spectrogram -> classifier; the
student is third-octave -> transcoder -> same classifier. Training
minimizes binary cross-entropy between the two pipelines' class
probabilities, updating only the transcoder: the classifier's implicit
knowledge of what natural mel spectrograms look like is distilled into
the transcoder weights.

The classifier here is a small frozen convnet trained in-repo on the
synthetic corpus; it plays the role of a large pretrained tagger at
desk scale, and its label space uses the general-taxonomy source names
so the ward label map applies unchanged.

Transcoder architecture (exactly six weighted layers):

    conv(29->64, 1x5) relu | up x2 | conv(64->64, 1x5) relu | up x2 |
    conv(64->64, 1x5) relu | linear resample x25/8 |
    conv(64->64, 1x5) relu | conv(64->64, 1x3) relu | conv(64->64, 1x3)

Band index runs over channels, time over width; the 64 output channels
are the 64 mel bins. The 2 * 2 * 25/8 chain realizes the 8 fps ->
100 fps (12.5x) rate change exactly for any even frame count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CLASSES, SOURCE_CLASS_NAMES, ClipRecipe, DatasetSplits, synthesize
from .checkpoint import load_network, save_network
from .mel import MelSpec, MelSpectrogram, linear_transcode, mel_from_waveform
from .nn import AdamState, Conv2d, Dense, GlobalAvgPool, MaxPool2d, Network, ReLU, Sigmoid, Upsample2d, adam_step, bce_loss
from .thirdoctave import FilterbankSpec, ThirdOctaveSpectrogram, analyze_waveform, standard_filterbank

# Fixed affine normalization shared by both pipelines: log10 power in
# roughly [-10, -2] maps to [-2, 2].
LOG_MEAN = -6.0
LOG_SCALE = 2.0
POWER_FLOOR = 1e-10


def normalize_log_power(log_power: np.ndarray) -> np.ndarray:
    return (log_power - LOG_MEAN) / LOG_SCALE


def tob_to_input(power: np.ndarray) -> np.ndarray:
    """(T, n_bands) linear band powers -> (n_bands, T) normalized log input.

    Powers are quantized to float32 first: the .tob container is the
    canonical sensor output, so detection math sees storage precision
    whether frames arrive from a file or from memory.
    """
    p32 = np.asarray(power, dtype=np.float32).astype(np.float64)
    logp = np.log10(np.maximum(p32, POWER_FLOOR))
    return normalize_log_power(logp).T


def build_teacher_network(n_classes: int = 4, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    norm = Conv2d(1, 1, kernel=(1, 1), name="norm", rng=rng)
    norm.weight.value = np.array([[[[1.0 / LOG_SCALE]]]])
    norm.bias.value = np.array([-LOG_MEAN / LOG_SCALE])
    norm.weight.trainable = False
    norm.bias.trainable = False
    layers = [
        norm,
        Conv2d(1, 8, kernel=(3, 3), padding=(1, 1), name="conv1", rng=rng),
        ReLU(),
        MaxPool2d((2, 4)),
        Conv2d(8, 16, kernel=(3, 3), padding=(1, 1), name="conv2", rng=rng),
        ReLU(),
        MaxPool2d((2, 2)),
        Conv2d(16, 32, kernel=(3, 3), padding=(1, 1), name="conv3", rng=rng),
        ReLU(),
        MaxPool2d((2, 2)),
        Conv2d(32, 32, kernel=(3, 3), padding=(1, 1), name="conv4", rng=rng),
        ReLU(),
        GlobalAvgPool(),
        Dense(32, n_classes, name="head", rng=rng),
        Sigmoid(),
    ]
    return Network(layers)


def build_transcoder_network(n_bands: int = 29, n_mels: int = 64, seed: int = 0) -> Network:
    rng = np.random.default_rng(seed)
    final = Conv2d(n_mels, n_mels, kernel=(1, 3), padding=(0, 1), name="conv6", rng=rng)
    final.bias.value = np.full(n_mels, LOG_MEAN)  # start near quiet mel values
    layers = [
        Conv2d(n_bands, n_mels, kernel=(1, 5), padding=(0, 2), name="conv1", rng=rng),
        ReLU(),
        Upsample2d(scale=(1, 2), mode="nearest"),
        Conv2d(n_mels, n_mels, kernel=(1, 5), padding=(0, 2), name="conv2", rng=rng),
        ReLU(),
        Upsample2d(scale=(1, 2), mode="nearest"),
        Conv2d(n_mels, n_mels, kernel=(1, 5), padding=(0, 2), name="conv3", rng=rng),
        ReLU(),
        Upsample2d(mode="linear", ratio=(25, 8)),
        Conv2d(n_mels, n_mels, kernel=(1, 5), padding=(0, 2), name="conv4", rng=rng),
        ReLU(),
        Conv2d(n_mels, n_mels, kernel=(1, 3), padding=(0, 1), name="conv5", rng=rng),
        ReLU(),
        final,
    ]
    return Network(layers)


@dataclass
class TeacherModel:
    """Frozen multilabel classifier over log-mel input."""

    network: Network
    class_names: tuple[str, ...] = SOURCE_CLASS_NAMES
    mel_spec: MelSpec = field(default_factory=MelSpec)

    @property
    def frozen(self) -> bool:
        return self.network.frozen

    def classify_batch(self, mel_images: np.ndarray, retain: bool = False) -> np.ndarray:
        """mel_images: (N, n_mels, T) raw log10-power. Returns (N, K)."""
        return self.network.forward(mel_images[:, None, :, :], retain=retain)

    def classify_mel(self, mel: MelSpectrogram | np.ndarray) -> np.ndarray:
        data = mel.data if isinstance(mel, MelSpectrogram) else np.asarray(mel)
        return self.classify_batch(data.T[None, :, :])[0]

    def save(self, path: str | Path) -> None:
        save_network(path, self.network, meta={"class_names": list(self.class_names), "role": "teacher"})

    @classmethod
    def load(cls, path: str | Path) -> "TeacherModel":
        network, meta = load_network(path)
        return cls(network=network, class_names=tuple(meta.get("class_names", SOURCE_CLASS_NAMES)))


@dataclass
class TranscoderModel:
    """Six-weighted-layer convnet mapping third-octave frames to mel frames."""

    network: Network
    mel_spec: MelSpec = field(default_factory=MelSpec)

    def apply_batch(self, tob_inputs: np.ndarray, retain: bool = False) -> np.ndarray:
        """tob_inputs: (N, n_bands, T) normalized log powers, T even.
        Returns (N, n_mels, 12.5*T) raw log10-mel values."""
        t = tob_inputs.shape[2]
        if t < 2 or t % 2:
            raise ValueError(f"transcoder needs an even frame count >= 2, got {t}")
        y = self.network.forward(tob_inputs[:, :, None, :], retain=retain)
        return y[:, :, 0, :]

    def save(self, path: str | Path) -> None:
        save_network(path, self.network, meta={"role": "transcoder"})

    @classmethod
    def load(cls, path: str | Path) -> "TranscoderModel":
        network, _ = load_network(path)
        return cls(network=network)


def new_transcoder(seed: int = 0) -> TranscoderModel:
    return TranscoderModel(network=build_transcoder_network(seed=seed))


def transcode(student: TranscoderModel, tob: ThirdOctaveSpectrogram) -> MelSpectrogram:
    """Deterministic third-octave -> mel inference."""
    if not tob.frames:
        raise ValueError("empty third-octave spectrogram")
    x = tob_to_input(tob.power_matrix())
    data = student.apply_batch(x[None])[0].T  # (T_mel, n_mels)
    spec = student.mel_spec
    return MelSpectrogram(spec=spec, data=np.maximum(data, spec.log_floor))


@dataclass
class FeatureSet:
    """Precomputed per-clip training features (float32 storage)."""

    tob_inputs: np.ndarray  # (n, n_bands, T_tob) normalized log power
    mel_images: np.ndarray  # (n, n_mels, T_mel) raw log10 power
    targets: np.ndarray  # (n, K) multilabel ground truth
    recipes: list[ClipRecipe]

    def __len__(self) -> int:
        return len(self.recipes)


def prepare_features(
    recipes: list[ClipRecipe],
    fbank: FilterbankSpec | None = None,
    mel_spec: MelSpec | None = None,
) -> FeatureSet:
    fbank = fbank or standard_filterbank()
    mel_spec = mel_spec or MelSpec()
    tob_list, mel_list, targets = [], [], []
    for recipe in recipes:
        wave, target = synthesize(recipe)
        tob = analyze_waveform(wave, fbank)
        tob_list.append(tob_to_input(tob.power_matrix()).astype(np.float32))
        mel_list.append(mel_from_waveform(wave, mel_spec).data.T.astype(np.float32))
        targets.append(target)
    return FeatureSet(
        tob_inputs=np.stack(tob_list),
        mel_images=np.stack(mel_list),
        targets=np.stack(targets),
        recipes=list(recipes),
    )


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    soft_targets: bool = True  # distill against teacher probabilities, not 0/1 labels
    log_csv: str | Path | None = None


def _write_log(path: str | Path | None, rows: list[dict]) -> None:
    if path is None or not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _count_per_class(recipes: list[ClipRecipe]) -> dict[str, int]:
    return {cls: sum(1 for r in recipes if cls in r.classes) for cls in CLASSES}


def macro_accuracy(probs: np.ndarray, targets: np.ndarray, threshold: float = 0.5) -> float:
    """Mean over classes of per-class accuracy at the threshold."""
    pred = probs >= threshold
    truth = targets >= 0.5
    return float(np.mean([np.mean(pred[:, k] == truth[:, k]) for k in range(targets.shape[1])]))


def train_teacher(
    splits: DatasetSplits,
    features: FeatureSet | None = None,
    val_features: FeatureSet | None = None,
    config: TrainConfig = TrainConfig(),
    min_clips_per_class: int = 100,
) -> tuple[TeacherModel, list[dict]]:
    """Train the toy classifier on ground-truth mel, then freeze it.

    The corpus must offer at least `min_clips_per_class` training clips
    for each class (the desk-scale stand-in for a web-scale corpus);
    pass a smaller minimum only in tests.
    """
    counts = _count_per_class(splits.train)
    lacking = {c: n for c, n in counts.items() if n < min_clips_per_class}
    if lacking:
        raise ValueError(f"corpus too small, need >= {min_clips_per_class} clips per class: {lacking}")

    if features is None:
        features = prepare_features(splits.train)
    if val_features is None and splits.val:
        val_features = prepare_features(splits.val)

    network = build_teacher_network(n_classes=len(CLASSES), seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)
    state = AdamState()
    rows = []
    n = len(features)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = features.mel_images[idx].astype(np.float64)
            t = features.targets[idx]
            network.zero_grads()
            probs = network.forward(x[:, None, :, :], retain=True)
            loss, grad = bce_loss(probs, t)
            network.backward(grad)
            adam_step(network.params(), state, lr=config.lr)
            losses.append(loss)
        row = {"epoch": epoch, "loss": float(np.mean(losses))}
        if val_features is not None:
            val_probs = network.forward(val_features.mel_images.astype(np.float64)[:, None, :, :])
            row["val_macro_acc"] = macro_accuracy(val_probs, val_features.targets)
        rows.append(row)
    network.set_trainable(False)
    _write_log(config.log_csv, rows)
    return TeacherModel(network=network), rows


def teacher_targets(teacher: TeacherModel, features: FeatureSet, soft: bool = True) -> np.ndarray:
    """Distillation targets: the teacher's probabilities on ground-truth
    mel (soft) or those probabilities thresholded at 0.5 (hard)."""
    probs = np.vstack(
        [
            teacher.classify_batch(features.mel_images[i : i + 16].astype(np.float64))
            for i in range(0, len(features), 16)
        ]
    )
    return probs if soft else (probs >= 0.5).astype(np.float64)


def distill_transcoder(
    student: TranscoderModel,
    teacher: TeacherModel,
    features: FeatureSet,
    config: TrainConfig = TrainConfig(),
    val_features: FeatureSet | None = None,
) -> tuple[TranscoderModel, list[dict]]:
    """Distill: update the transcoder so teacher(student(tob)) matches the
    teacher's own output on ground-truth mel. The teacher must be frozen;
    gradients flow through it into the student only."""
    if not teacher.frozen:
        raise ValueError("teacher must be frozen before distillation")
    targets = teacher_targets(teacher, features, soft=config.soft_targets)
    val_targets = None
    if val_features is not None:
        val_targets = teacher_targets(teacher, val_features, soft=config.soft_targets)

    rng = np.random.default_rng(config.seed + 2)
    state = AdamState()
    rows = []
    n = len(features)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = features.tob_inputs[idx].astype(np.float64)
            t = targets[idx]
            student.network.zero_grads()
            teacher.network.zero_grads()
            mel_pred = student.apply_batch(x, retain=True)  # (N, n_mels, T)
            probs = teacher.classify_batch(mel_pred, retain=True)
            loss, grad = bce_loss(probs, t)
            g_mel = teacher.network.backward(grad)[:, 0, :, :]
            student.network.backward(g_mel[:, :, None, :])
            adam_step(student.network.params(), state, lr=config.lr)
            losses.append(loss)
        row = {"epoch": epoch, "loss": float(np.mean(losses))}
        if val_features is not None:
            val_eval = evaluate_student(student, teacher, val_features, targets=val_targets)
            row["agreement"] = val_eval["agreement"]
        rows.append(row)
    _write_log(config.log_csv, rows)
    return student, rows


def _batched_probs(teacher: TeacherModel, mel_images: np.ndarray, batch: int = 16) -> np.ndarray:
    return np.vstack(
        [
            teacher.classify_batch(mel_images[i : i + batch].astype(np.float64))
            for i in range(0, mel_images.shape[0], batch)
        ]
    )


def _student_mel_batch(student: TranscoderModel, tob_inputs: np.ndarray, batch: int = 16) -> np.ndarray:
    return np.vstack(
        [
            student.apply_batch(tob_inputs[i : i + batch].astype(np.float64))
            for i in range(0, tob_inputs.shape[0], batch)
        ]
    )


def evaluate_student(
    student: TranscoderModel,
    teacher: TeacherModel,
    features: FeatureSet,
    targets: np.ndarray | None = None,
) -> dict:
    """Held-out comparison of the trained student against the teacher.

    Agreement is top-1 match with the teacher's own prediction on
    ground-truth mel, measured over clips with at least one active
    class (background-only clips have no meaningful top-1).
    """
    if targets is None:
        targets = teacher_targets(teacher, features, soft=True)
    student_mel = _student_mel_batch(student, features.tob_inputs)
    student_probs = _batched_probs(teacher, student_mel)
    loss, _ = bce_loss(student_probs, targets)
    labeled = features.targets.sum(axis=1) > 0
    agree = float(
        np.mean(
            student_probs[labeled].argmax(axis=1) == targets[labeled].argmax(axis=1)
        )
    )
    return {"bce": loss, "agreement": agree, "probs": student_probs}


def evaluate_linear_baseline(
    teacher: TeacherModel,
    features: FeatureSet,
    fbank: FilterbankSpec | None = None,
    targets: np.ndarray | None = None,
) -> dict:
    """Same evaluation for the non-neural resampling baseline."""
    fbank = fbank or standard_filterbank()
    if targets is None:
        targets = teacher_targets(teacher, features, soft=True)
    mel_spec = teacher.mel_spec
    mel_images = []
    for i in range(len(features)):
        # invert the input normalization back to linear band powers
        logp = features.tob_inputs[i].astype(np.float64).T * LOG_SCALE + LOG_MEAN
        power = 10.0**logp
        frames = [type("F", (), {})() for _ in range(power.shape[0])]
        tob = _tob_from_matrix(power, fbank)
        mel_images.append(linear_transcode(tob, mel_spec).data.T)
    mel_images = np.stack(mel_images)
    probs = _batched_probs(teacher, mel_images)
    loss, _ = bce_loss(probs, targets)
    labeled = features.targets.sum(axis=1) > 0
    agree = float(
        np.mean(probs[labeled].argmax(axis=1) == targets[labeled].argmax(axis=1))
    )
    return {"bce": loss, "agreement": agree, "probs": probs}


def _tob_from_matrix(power: np.ndarray, fbank: FilterbankSpec) -> ThirdOctaveSpectrogram:
    from .thirdoctave import ThirdOctaveFrame

    frames = [ThirdOctaveFrame(band_power=power[i], frame_index=i) for i in range(power.shape[0])]
    return ThirdOctaveSpectrogram(spec=fbank, frames=frames)
