"""Federated training with uncertainty-probe trust screening.

Each round every client starts from the global weights, runs a few local
SGD epochs on its private shard, and submits only its weight delta. The
aggregator never sees raw client data; instead it probes every client's
post-update model on a fixed public set of fused feature vectors and
summarizes each client by its mean Monte-Carlo total uncertainty on those
probes. Clients whose summary deviates from the cohort median by more
than ``tau`` robust standard deviations (median absolute deviation scaled
by 1.4826, the normal-consistency constant) are excluded from that
round's shard-size-weighted delta average. Exclusion is per round; a
flagged client is probed again next round.

Two attacker models are built in:

* gradient poisoner: submits its honest delta plus a bounded
  gradient-ascent displacement that raises the genuine-class probability
  on a fixed batch of poisoned (deepfake) feature vectors.
* calibration attacker: scales the final layer of its local model by
  ``gamma``, sharpening every logit and corrupting the uncertainty
  calibration of the aggregate.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .classifier import DropoutMlpClassifier, expected_calibration_error, loss_and_gradients
from .errors import (
    EmptyShard,
    RoundAborted,
    ScenarioError,
    TooFewClients,
)
from .fusion import OrthogonalFusion, pool_embedding
from .features import physics_vector
from .metrics import ScoreSet, eer
from .rngutil import substream
from .signals import label_to_int
from .synth import SyntheticCorpusSpec, generate_synthetic
from .validation import as_float_matrix, as_label_vector

MAD_CONSISTENCY = 1.4826  # 1 / Phi^-1(3/4): MAD -> sigma for normal data
_DEGENERATE_MAD = 1e-12
_DEGENERATE_DEVIATION = 1e-6

ATTACK_HONEST = "honest"
ATTACK_GRADIENT = "gradient_poisoner"
ATTACK_CALIBRATION = "calibration_attacker"
ATTACK_KINDS = (ATTACK_HONEST, ATTACK_GRADIENT, ATTACK_CALIBRATION)

VERDICT_ACCEPTED = "accepted"
VERDICT_FLAGGED = "flagged"


@dataclass(frozen=True)
class AttackSpec:
    """Behavior of one client; honest clients use the default."""

    kind: str = ATTACK_HONEST
    lambda_strength: float = 5.0
    gamma: float = 10.0
    ascent_steps: int = 10

    def __post_init__(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ScenarioError(f"unknown attack kind {self.kind!r}")
        if self.lambda_strength < 0:
            raise ScenarioError("lambda_strength must be non-negative")
        if self.gamma <= 0:
            raise ScenarioError("gamma must be positive")
        if self.ascent_steps < 1:
            raise ScenarioError("ascent_steps must be at least 1")


@dataclass(frozen=True, eq=False)
class ClientState:
    """One participant: a private shard plus its declared behavior."""

    client_id: str
    features: np.ndarray
    labels: np.ndarray
    attack: AttackSpec = AttackSpec()
    poison_targets: np.ndarray | None = None

    def __post_init__(self) -> None:
        x = as_float_matrix(self.features, "client features")
        y = as_label_vector(self.labels, x.shape[0])
        if x.shape[0] == 0:
            raise EmptyShard(f"client {self.client_id} has no local data")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if self.attack.kind == ATTACK_GRADIENT and self.poison_targets is None:
            raise ScenarioError("gradient poisoner needs a poison target batch")

    @property
    def shard_size(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True, eq=False)
class ProbeReport:
    """Per-probe total uncertainty of one client's local model."""

    client_id: str
    total_u: np.ndarray

    @property
    def mean_total_u(self) -> float:
        return float(np.mean(self.total_u))

    @property
    def std_total_u(self) -> float:
        return float(np.std(self.total_u))


@dataclass(frozen=True)
class RoundOutcome:
    round_index: int
    verdicts: dict[str, str]
    n_accepted: int
    eer: float
    ece: float
    client_mean_u: dict[str, float]

    def to_json_dict(self) -> dict:
        return {
            "round": self.round_index,
            "verdicts": dict(sorted(self.verdicts.items())),
            "n_accepted": self.n_accepted,
            "eer": self.eer,
            "ece": self.ece,
            "client_mean_u": dict(sorted(self.client_mean_u.items())),
        }


# -- weight-list arithmetic ----------------------------------------------------


def _add(a: list[np.ndarray], b: list[np.ndarray]) -> list[np.ndarray]:
    return [x + y for x, y in zip(a, b)]


def _sub(a: list[np.ndarray], b: list[np.ndarray]) -> list[np.ndarray]:
    return [x - y for x, y in zip(a, b)]


def _flat_norm(a: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(x * x)) for x in a)))


# -- per-round operations --------------------------------------------------------


def _ascend_genuine_probability(
    params: list[np.ndarray], targets: np.ndarray, total_length: float, steps: int
) -> list[np.ndarray]:
    """Walk ``total_length`` along the normalized gradient of mean log p(genuine)."""
    current = [p.copy() for p in params]
    if total_length == 0.0:
        return current
    all_genuine = np.ones(targets.shape[0], dtype=np.int64)
    unit_weights = np.ones(targets.shape[0])
    step_len = total_length / steps
    for _ in range(steps):
        # Cross-entropy toward "genuine" is -mean log p_genuine, so the
        # ascent direction is the negated loss gradient.
        _, grads = loss_and_gradients(current, targets, all_genuine, unit_weights)
        norm = _flat_norm(grads)
        if norm == 0.0:
            break
        current = [p - (step_len / norm) * g for p, g in zip(current, grads)]
    return current


def local_update(
    client: ClientState,
    global_weights: list[np.ndarray],
    template: DropoutMlpClassifier,
    local_epochs: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """One client's submitted weight delta for this round.

    The honest part is always computed first: attacks are perturbations on
    top of genuine local training, which is what makes them hard to spot
    from the update alone.
    """
    template.set_weights(global_weights)
    template.run_epochs(client.features, client.labels, local_epochs, rng)
    local = template.get_weights()
    attack = client.attack
    if attack.kind == ATTACK_GRADIENT:
        local = _ascend_genuine_probability(
            local, client.poison_targets, attack.lambda_strength, attack.ascent_steps
        )
    elif attack.kind == ATTACK_CALIBRATION:
        local[-2] = local[-2] * attack.gamma
        local[-1] = local[-1] * attack.gamma
    return _sub(local, global_weights)


def probe_clients(
    clients: list[ClientState],
    deltas: list[list[np.ndarray]],
    global_weights: list[np.ndarray],
    template: DropoutMlpClassifier,
    probe_features: np.ndarray,
    n_mc: int,
    seed: int,
    round_index: int,
) -> list[ProbeReport]:
    """Mean MC total uncertainty of every client's post-update model on the probes."""
    probe_features = as_float_matrix(probe_features, "probe features")
    reports = []
    for k, (client, delta) in enumerate(zip(clients, deltas)):
        template.set_weights(_add(global_weights, delta))
        totals = np.array(
            [
                template.mc_predict(
                    row, n_mc, seed=seed, stream=("probe", round_index, k, i)
                ).total_u
                for i, row in enumerate(probe_features)
            ]
        )
        reports.append(ProbeReport(client.client_id, totals))
    return reports


def mad_screen(reports: list[ProbeReport], tau: float = 3.0) -> dict[str, str]:
    """Flag clients whose mean probe uncertainty is a robust outlier.

    Threshold is ``tau`` scaled-MAD units from the median. When the MAD
    collapses (all reports essentially identical) any client farther than
    an absolute 1e-6 from the median is flagged instead, so a cohort of
    byte-identical honest clients is never flagged.
    """
    if len(reports) < 3:
        raise TooFewClients(f"screening needs at least 3 reports, got {len(reports)}")
    if tau <= 0:
        raise ScenarioError("tau must be positive")
    means = np.array([r.mean_total_u for r in reports])
    median = float(np.median(means))
    deviations = np.abs(means - median)
    mad = float(np.median(deviations))
    if mad < _DEGENERATE_MAD:
        flagged = deviations > _DEGENERATE_DEVIATION
    else:
        flagged = deviations > tau * MAD_CONSISTENCY * mad
    return {
        r.client_id: VERDICT_FLAGGED if f else VERDICT_ACCEPTED
        for r, f in zip(reports, flagged)
    }


def aggregate(
    deltas: list[list[np.ndarray]], shard_sizes: list[int]
) -> list[np.ndarray]:
    """Shard-size-weighted average of the accepted deltas."""
    if not deltas:
        raise RoundAborted("no accepted client updates this round")
    if len(deltas) != len(shard_sizes):
        raise ScenarioError("deltas and shard sizes must align")
    weights = np.array(shard_sizes, dtype=np.float64)
    if np.any(weights <= 0):
        raise EmptyShard("shard sizes must be positive")
    weights = weights / np.sum(weights)
    out = [np.zeros_like(p) for p in deltas[0]]
    for w, delta in zip(weights, deltas):
        for acc, d in zip(out, delta):
            acc += w * d
    return out


# -- scenario --------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one federated simulation."""

    corpus: SyntheticCorpusSpec
    n_clients: int = 10
    shard_size: int = 60
    public_size: int = 48
    probe_size: int = 24
    heldout_size: int = 160
    rounds: int = 4
    local_epochs: int = 2
    learning_rate: float = 0.05
    batch_size: int = 32
    dropout_rate: float = 0.2
    hidden1: int = 64
    hidden2: int = 32
    class_weighting: bool = True
    n_mc: int = 15
    tau: float = 3.0
    screening: bool = True
    attacker_type: str = "none"
    attacker_count: int = 0
    gamma: float = 10.0
    lambda_strength: float = 5.0
    ascent_steps: int = 10
    poison_target_size: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_clients < 3:
            raise ScenarioError("need at least 3 clients for robust screening")
        if self.attacker_type not in ("none", "calibration", "gradient"):
            raise ScenarioError(f"unknown attacker_type {self.attacker_type!r}")
        if self.attacker_count < 0:
            raise ScenarioError("attacker_count must be non-negative")
        if self.attacker_type == "none" and self.attacker_count > 0:
            raise ScenarioError("attacker_count must be 0 when attacker_type is none")
        if self.attacker_count / self.n_clients >= 0.5:
            raise ScenarioError(
                "attacker fraction must stay below one half "
                f"({self.attacker_count}/{self.n_clients} given)"
            )
        if min(self.shard_size, self.public_size, self.heldout_size) < 2:
            raise ScenarioError("shard, public, and heldout partitions need at least 2 rows")
        if not 1 <= self.probe_size <= self.public_size:
            raise ScenarioError("probe_size must lie in [1, public_size]")
        if self.rounds < 1 or self.local_epochs < 1:
            raise ScenarioError("rounds and local_epochs must be at least 1")
        if self.tau <= 0:
            raise ScenarioError("tau must be positive")
        if self.n_mc < 2:
            raise ScenarioError("n_mc must be at least 2")
        total_needed = self.public_size + self.heldout_size + self.n_clients * self.shard_size
        total_have = self.corpus.n_genuine + self.corpus.n_fake
        if total_have < total_needed:
            raise ScenarioError(
                f"corpus has {total_have} segments, scenario needs {total_needed}"
            )

    @property
    def attacker_ids(self) -> tuple[str, ...]:
        return tuple(f"c{k:02d}" for k in range(self.attacker_count))


@dataclass(frozen=True, eq=False)
class SimulationResult:
    outcomes: list[RoundOutcome]
    final_weights: list[np.ndarray]
    final_eer: float
    final_ece: float
    attacker_ids: tuple[str, ...]
    screening: bool


def _stratified_partition(
    y: np.ndarray, sizes: list[int], rng: np.random.Generator
) -> list[np.ndarray]:
    """Disjoint index blocks with each class split proportionally."""
    genuine_idx = rng.permutation(np.flatnonzero(y == 1))
    fake_idx = rng.permutation(np.flatnonzero(y == 0))
    ratio = genuine_idx.size / y.size
    blocks = []
    g_used, f_used = 0, 0
    for size in sizes:
        n_genuine = int(round(size * ratio))
        n_genuine = min(max(n_genuine, 1), size - 1)  # keep both classes present
        n_fake = size - n_genuine
        if g_used + n_genuine > genuine_idx.size or f_used + n_fake > fake_idx.size:
            raise ScenarioError("corpus class counts cannot fill the requested partitions")
        block = np.concatenate(
            [genuine_idx[g_used : g_used + n_genuine], fake_idx[f_used : f_used + n_fake]]
        )
        g_used += n_genuine
        f_used += n_fake
        blocks.append(np.sort(block))
    return blocks


@dataclass(frozen=True, eq=False)
class ScenarioData:
    """Fused, scaled features partitioned for one scenario."""

    clients: list[ClientState]
    probe_features: np.ndarray
    heldout_features: np.ndarray
    heldout_labels: np.ndarray
    n_features: int


def prepare_scenario(config: ScenarioConfig) -> ScenarioData:
    """Generate the corpus, fuse features on the public split, build shards.

    The fusion transform and the feature scale are fitted on the public
    partition only; clients and the aggregator both see exactly the same
    frozen preprocessing, and probe vectors come from public data alone.
    """
    segments = generate_synthetic(config.corpus)
    pooled = np.vstack([pool_embedding(s.embedding) for s in segments])
    physics = np.vstack([physics_vector(s).as_array() for s in segments])
    x_raw = np.hstack([pooled, physics])
    y = np.array([label_to_int(s.label) for s in segments], dtype=np.int64)

    sizes = [config.public_size, config.heldout_size] + [config.shard_size] * config.n_clients
    blocks = _stratified_partition(y, sizes, substream(config.seed, "split"))
    public_idx, heldout_idx = blocks[0], blocks[1]

    fusionizer = OrthogonalFusion().fit(x_raw[public_idx])
    fused = fusionizer.transform(x_raw)
    scale = np.std(fused[public_idx], axis=0)
    scale = np.where(scale < 1e-8, 1.0, scale)
    fused = fused / scale

    clients = []
    for k in range(config.n_clients):
        idx = blocks[2 + k]
        client_id = f"c{k:02d}"
        attack = AttackSpec(ATTACK_HONEST)
        poison = None
        if client_id in config.attacker_ids:
            if config.attacker_type == "calibration":
                attack = AttackSpec(ATTACK_CALIBRATION, gamma=config.gamma)
            else:
                attack = AttackSpec(
                    ATTACK_GRADIENT,
                    lambda_strength=config.lambda_strength,
                    ascent_steps=config.ascent_steps,
                )
                fake_rows = idx[y[idx] == 0][: config.poison_target_size]
                poison = fused[fake_rows]
        clients.append(
            ClientState(client_id, fused[idx], y[idx], attack, poison)
        )
    # Probe on the deepfake side of the public split first: those rows sit
    # in the class-overlap region, so honest models keep a stable, high
    # uncertainty on them round after round, which makes a tampered
    # uncertainty profile stand out.
    probe_rows = np.concatenate(
        [public_idx[y[public_idx] == 0], public_idx[y[public_idx] == 1]]
    )[: config.probe_size]
    return ScenarioData(
        clients=clients,
        probe_features=fused[probe_rows],
        heldout_features=fused[heldout_idx],
        heldout_labels=y[heldout_idx],
        n_features=fused.shape[1],
    )


def _heldout_metrics(
    template: DropoutMlpClassifier,
    weights: list[np.ndarray],
    data: ScenarioData,
    config: ScenarioConfig,
) -> tuple[float, float]:
    template.set_weights(weights)
    scores = template.decision_scores(data.heldout_features)
    eer_value, _ = eer(
        ScoreSet(scores[data.heldout_labels == 1], scores[data.heldout_labels == 0])
    )
    preds = template.mc_predict_batch(data.heldout_features, config.n_mc, seed=config.seed)
    ece = expected_calibration_error(preds, data.heldout_labels)
    return eer_value, ece


def run_simulation(config: ScenarioConfig, data: ScenarioData | None = None) -> SimulationResult:
    """Run every round and return per-round outcomes plus the final model state.

    ``data`` may be passed in so screened/unscreened arms share one
    prepared scenario; by default it is built from the config.
    """
    if data is None:
        data = prepare_scenario(config)
    template = DropoutMlpClassifier(
        hidden1=config.hidden1,
        hidden2=config.hidden2,
        dropout_rate=config.dropout_rate,
        epochs=config.local_epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
        class_weighting=config.class_weighting,
    )
    template.init_untrained(data.n_features)
    global_weights = template.get_weights()
    shard_sizes = [c.shard_size for c in data.clients]
    outcomes = []
    for r in range(config.rounds):
        deltas = [
            local_update(
                client,
                global_weights,
                template,
                config.local_epochs,
                substream(config.seed, "local", r, k),
            )
            for k, client in enumerate(data.clients)
        ]
        reports = probe_clients(
            data.clients,
            deltas,
            global_weights,
            template,
            data.probe_features,
            config.n_mc,
            config.seed,
            r,
        )
        if config.screening:
            verdicts = mad_screen(reports, config.tau)
        else:
            verdicts = {c.client_id: VERDICT_ACCEPTED for c in data.clients}
        accepted = [
            (delta, size)
            for client, delta, size in zip(data.clients, deltas, shard_sizes)
            if verdicts[client.client_id] == VERDICT_ACCEPTED
        ]
        if not accepted:
            raise RoundAborted(f"round {r}: every client update was rejected")
        merged = aggregate([d for d, _ in accepted], [s for _, s in accepted])
        global_weights = _add(global_weights, merged)
        eer_value, ece = _heldout_metrics(template, global_weights, data, config)
        outcomes.append(
            RoundOutcome(
                round_index=r,
                verdicts=verdicts,
                n_accepted=len(accepted),
                eer=eer_value,
                ece=ece,
                client_mean_u={
                    rep.client_id: rep.mean_total_u for rep in reports
                },
            )
        )
    return SimulationResult(
        outcomes=outcomes,
        final_weights=global_weights,
        final_eer=outcomes[-1].eer,
        final_ece=outcomes[-1].ece,
        attacker_ids=config.attacker_ids,
        screening=config.screening,
    )


def flag_statistics(result: SimulationResult) -> dict:
    """Precision/recall of flags against the scenario's ground-truth attackers."""
    attackers = set(result.attacker_ids)
    true_pos = false_pos = false_neg = 0
    for outcome in result.outcomes:
        for client_id, verdict in outcome.verdicts.items():
            flagged = verdict == VERDICT_FLAGGED
            if flagged and client_id in attackers:
                true_pos += 1
            elif flagged:
                false_pos += 1
            elif client_id in attackers:
                false_neg += 1
    flagged_total = true_pos + false_pos
    precision = true_pos / flagged_total if flagged_total else None
    attacker_rounds = true_pos + false_neg
    recall = true_pos / attacker_rounds if attacker_rounds else None
    return {
        "flag_precision": precision,
        "flag_recall": recall,
        "n_flags": flagged_total,
        "n_attacker_rounds": attacker_rounds,
    }
