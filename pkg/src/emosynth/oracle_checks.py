"""The acceptance suite: engine-level checks against independent oracles.

Each check pits an implementation path against an independent route — brute
Monte Carlo, naive direct summation, finite differences, or closed-form
algebra — at a fixed tolerance with fixed seeds. The CLI ``oracle-check``
subcommand prints one pass/fail line per check; the pytest acceptance module
asserts the same results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import audio
from .corpus import standard_sweep_corpus, tight_training_corpus
from .errors import InputError
from .evaluate import SweepConfig, bayes_probability, intensity_sweep
from .guidance import combine_scores, guided_score
from .rng import make_rng
from .sampler import SamplerConfig, sample
from .schedule import NoiseSchedule, PriorField, forward_marginal
from .score_model import (
    AnalyticScoreField,
    ConditioningContext,
    EmotionEmbedding,
    ToyScoreNet,
    time_embedding,
)
from .text_prior import TextPriorNet, duration_loss_grad, expand, prior_loss_grad
from .training import (
    MixtureModel,
    TrainConfig,
    apply_null_dropout,
    train_loop,
)

__all__ = ["CheckResult", "ACCEPTANCE_CHECKS", "run_acceptance", "training_reference_run"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _result(name, start, passed, detail) -> CheckResult:
    return CheckResult(name, bool(passed), detail, time.time() - start)


def _standard_ctx(label=None, seed=3) -> ConditioningContext:
    return ConditioningContext(np.zeros(512), label, EmotionEmbedding(make_rng(seed)))


# -- 1 -----------------------------------------------------------------------


def check_forward_marginal_mc() -> CheckResult:
    """Closed-form marginals vs Euler-Maruyama of the forward process."""
    start = time.time()
    schedule = NoiseSchedule()
    n_paths, dt = 10_000, 1e-4
    rng = make_rng(2024, 0x3A)
    x = np.full(n_paths, 1.0)
    marks = {0.25: None, 0.5: None, 1.0: None}
    for k in range(int(round(1.0 / dt))):
        beta = schedule.beta(k * dt)
        x = x - 0.5 * beta * x * dt + np.sqrt(beta * dt) * rng.standard_normal(n_paths)
        t_next = (k + 1) * dt
        for tc in marks:
            if marks[tc] is None and t_next >= tc - 1e-12:
                marks[tc] = (x.mean(), x.var(ddof=1))
    prior = PriorField.standard(1, 1)
    x0 = np.array([[1.0]])
    worst = 0.0
    details = []
    for tc, (m_emp, v_emp) in marks.items():
        mean, var = forward_marginal(schedule, prior, x0, tc)
        se_mean = np.sqrt(v_emp / n_paths)
        se_var = v_emp * np.sqrt(2.0 / (n_paths - 1))
        dev_m = abs(m_emp - mean[0, 0]) / se_mean
        dev_v = abs(v_emp - var[0]) / se_var
        worst = max(worst, dev_m, dev_v)
        details.append(f"t={tc}: mean {dev_m:.2f} SE, var {dev_v:.2f} SE")
    return _result(
        "forward-marginal-mc", start, worst < 3.0, "; ".join(details) + " (limit 3 SE)"
    )


# -- 2 -----------------------------------------------------------------------


def check_stationarity() -> CheckResult:
    """Stationary data law: bitwise-fixed ODE, moment-preserving SDE."""
    start = time.time()
    schedule = NoiseSchedule()
    n_paths, d = 10_000, 2
    stationary = AnalyticScoreField(np.array([1.0]), np.zeros((1, d)), np.ones((1, d)))
    prior = PriorField.standard(n_paths, d)
    ctx = _standard_ctx()
    bound = stationary.bound(schedule, prior)

    cfg = SamplerConfig(steps=100, seed=42, keep_trajectory=True)
    x_final, traj = sample(bound, prior, ctx, cfg, schedule)
    ode_bitwise = np.array_equal(x_final, traj.states[0])

    x_sde, _ = sample(bound, prior, ctx, SamplerConfig(steps=200, seed=99, solver="sde"), schedule)
    mean_dev = np.abs(x_sde.mean(axis=0)) / np.sqrt(1.0 / n_paths)
    var_dev = np.abs(x_sde.var(axis=0, ddof=1) - 1.0) / np.sqrt(2.0 / (n_paths - 1))
    sde_ok = mean_dev.max() < 4.0 and var_dev.max() < 4.0
    return _result(
        "stationarity",
        start,
        ode_bitwise and sde_ok,
        f"ODE bitwise fixed: {ode_bitwise}; SDE mean dev {mean_dev.max():.2f} SE, "
        f"var dev {var_dev.max():.2f} SE (limit 4 SE)",
    )


# -- 3 -----------------------------------------------------------------------


def _gaussian_recovery(n_samples: int, steps: int, seed: int):
    schedule = NoiseSchedule()
    field = AnalyticScoreField(np.array([1.0]), np.array([[1.0]]), np.array([[0.25]]))
    prior = PriorField.standard(n_samples, 1)
    x, _ = sample(
        field.bound(schedule, prior),
        prior,
        _standard_ctx(),
        SamplerConfig(steps=steps, seed=seed),
        schedule,
    )
    return float(x.mean()), float(x.var(ddof=1))


def check_oracle_recovery() -> CheckResult:
    """PF-ODE recovers N(1, 0.25); error shrinks as the step count grows."""
    start = time.time()
    mean, var = _gaussian_recovery(20_000, 200, seed=7)
    mean_ok = abs(mean - 1.0) <= 0.02
    var_ok = abs(var - 0.25) <= 0.05 * 0.25
    errs = {50: [], 400: []}
    for seed in range(5):
        for n in errs:
            m, v = _gaussian_recovery(20_000, n, seed=100 + seed)
            errs[n].append(abs(m - 1.0) + abs(v - 0.25))
    refine_ok = np.mean(errs[400]) < np.mean(errs[50])
    return _result(
        "oracle-recovery",
        start,
        mean_ok and var_ok and refine_ok,
        f"N=200: mean {mean:.4f} (|err| <= 0.02), var {var:.4f} (within 5% of 0.25); "
        f"moment error N=400 {np.mean(errs[400]):.4f} < N=50 {np.mean(errs[50]):.4f}",
    )


# -- 4 -----------------------------------------------------------------------


def check_guidance_identities() -> CheckResult:
    """w=1 collapses to the conditional, w=0 to the unconditional; affine in w."""
    start = time.time()
    schedule = NoiseSchedule()
    field = AnalyticScoreField(
        np.array([0.5, 0.5]),
        np.array([[1.5, 0.0], [-1.5, 0.0]]),
        np.ones((2, 2)),
        labels=("Anger", "Sad"),
    )
    prior = PriorField.standard(8, 2)
    bound = field.bound(schedule, prior)
    rng = make_rng(11)
    x = rng.standard_normal((8, 2))
    ctx = _standard_ctx("Anger")
    t = 0.37
    s_cond = bound.score(x, prior.mu, t, ctx)
    s_uncond = bound.score(x, prior.mu, t, ctx.with_label(None))
    dev1 = np.max(np.abs(guided_score(bound, x, prior.mu, t, ctx, 1.0) - s_cond))
    dev0 = np.max(np.abs(guided_score(bound, x, prior.mu, t, ctx, 0.0) - s_uncond))
    ws = (0.3, 1.7, 4.1)
    outs = [combine_scores(s_cond, s_uncond, w) for w in ws]
    lam = (ws[1] - ws[0]) / (ws[2] - ws[0])
    affine_dev = np.max(np.abs(outs[1] - (outs[0] + lam * (outs[2] - outs[0]))))
    ok = dev1 <= 1e-15 and dev0 <= 1e-15 and affine_dev <= 1e-12
    return _result(
        "guidance-identities",
        start,
        ok,
        f"w=1 dev {dev1:.2e}, w=0 dev {dev0:.2e} (limit 1e-15); "
        f"affinity dev {affine_dev:.2e} (limit 1e-12)",
    )


# -- 5 -----------------------------------------------------------------------


def _curve_monotone(curve, se_budget=1.0):
    """Nondecreasing up to one inversion within ``se_budget`` standard errors."""
    soft_drops = 0
    for lo, hi in zip(curve, curve[1:]):
        drop = lo.mean_prob - hi.mean_prob
        if drop > 0:
            se = np.hypot(lo.stderr, hi.stderr)
            if drop > se_budget * se:
                return False
            soft_drops += 1
    return soft_drops <= 1


def check_intensity_monotonicity() -> CheckResult:
    """Bayes probability rises with intensity; the baseline stays flat."""
    start = time.time()
    corpus = standard_sweep_corpus()
    field = corpus.to_score_field().bound(NoiseSchedule(), PriorField.standard(2000, 2))
    report = intensity_sweep(
        field,
        corpus,
        labels=["Anger", "Happy", "Neutral"],
        w_list=[0.0, 1.0, 2.0, 4.0, 8.0],
        config=SweepConfig(n_samples=2000, steps=200, seed=1234),
    )
    details = []
    ok = True
    for label in ("Anger", "Happy"):
        curve = report.curve(label)
        gain = curve[-1].mean_prob - curve[1].mean_prob
        mono = _curve_monotone(curve)
        ok = ok and mono and gain > 0.05
        details.append(f"{label}: gain(w8-w1)={gain:.3f} (>0.05), monotone={mono}")
    base = report.curve("Neutral")
    spread = max(r.mean_prob for r in base) - min(r.mean_prob for r in base)
    # the baseline posterior is constant by construction, so its standard
    # error can round to zero; allow an absolute epsilon for that collapse
    flat_budget = max(2.0 * max(r.stderr for r in base), 1e-12)
    base_ok = spread <= flat_budget
    ok = ok and base_ok
    details.append(f"Neutral: spread {spread:.2e} <= {flat_budget:.2e}")
    return _result("intensity-monotonicity", start, ok, "; ".join(details))


# -- 6 -----------------------------------------------------------------------


def check_null_dropout() -> CheckResult:
    """Observed null fraction over 1e4 draws at prob 0.10 lands in [0.09, 0.11]."""
    start = time.time()
    ctx = _standard_ctx("Happy")
    rng = make_rng(77, 0xD0)
    n = 10_000
    nulls = sum(
        apply_null_dropout(ctx, 0.10, rng).emo_label is None for _ in range(n)
    )
    frac = nulls / n
    return _result(
        "conditioning-dropout", start, 0.09 <= frac <= 0.11, f"null fraction {frac:.4f}"
    )


# -- 7 -----------------------------------------------------------------------


def _fd_worst_error(loss_fn, params: dict, rng, coords_per_group=5, h=1e-5):
    worst = 0.0
    for name, p in params.items():
        flat_v = p.value.reshape(-1)
        flat_g = p.grad.reshape(-1)
        for _ in range(min(coords_per_group, flat_v.size)):
            i = int(rng.integers(flat_v.size))
            keep = flat_v[i]
            flat_v[i] = keep + h
            up = loss_fn()
            flat_v[i] = keep - h
            down = loss_fn()
            flat_v[i] = keep
            fd = (up - down) / (2.0 * h)
            an = flat_g[i]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            worst = max(worst, rel)
    return worst


def check_gradient_integrity() -> CheckResult:
    """Every parameter group passes central finite-difference checks."""
    start = time.time()
    rng = make_rng(5, 0xFD)
    net = ToyScoreNet(2, hidden=16, rng=rng)
    table = EmotionEmbedding(rng)
    probe = rng.standard_normal((4, 2))
    x = rng.standard_normal((4, 2))
    mu = rng.standard_normal((4, 2))
    t_emb = np.tile(time_embedding(0.4), (4, 1))
    spk = np.tile(rng.standard_normal(512), (4, 1))

    def net_loss(backward=False):
        emo = np.tile(table.lookup("Fear"), (4, 1))
        out, cache = net.forward(x, mu, t_emb, spk, emo)
        if backward:
            d_emo = net.backward(cache, probe)
            table.accumulate_grad("Fear", d_emo.sum(axis=0))
        return float(np.sum(out * probe))

    params = {**net.parameters(), **table.parameters()}
    for p in params.values():
        p.zero_grad()
    net_loss(backward=True)
    worst_net = _fd_worst_error(net_loss, params, rng)

    text = TextPriorNet(6, rng=rng)
    tokens = np.array([0, 3, 5, 3])
    durations = np.array([2, 1, 3, 1])
    target = rng.standard_normal((int(durations.sum()), 128))

    def text_loss(backward=False):
        (token_mu, log_dur), cache = text.encode_with_cache(tokens)
        frame_mu = expand(token_mu, durations)
        p_loss, d_frame = prior_loss_grad(frame_mu, target)
        d_loss, d_log = duration_loss_grad(log_dur, durations)
        if backward:
            d_token = np.zeros_like(token_mu)
            offsets = np.concatenate([[0], np.cumsum(durations)])
            for i in range(len(tokens)):
                d_token[i] = d_frame[offsets[i] : offsets[i + 1]].sum(axis=0)
            text.backward(cache, d_token, d_log)
        return p_loss + d_loss

    text_params = text.parameters()
    for p in text_params.values():
        p.zero_grad()
    text_loss(backward=True)
    worst_text = _fd_worst_error(text_loss, text_params, rng)

    worst = max(worst_net, worst_text)
    return _result(
        "gradient-integrity",
        start,
        worst < 1e-4,
        f"worst relative FD error: score net {worst_net:.2e}, text prior {worst_text:.2e} "
        "(limit 1e-4)",
    )


# -- 8 -----------------------------------------------------------------------

REFERENCE_TRAIN_CONFIG = TrainConfig(
    learning_rate=2e-3, batch_size=64, iterations=2000, null_dropout_prob=0.10
)

_TRAIN_CACHE: dict[int, tuple[MixtureModel, object]] = {}


def training_reference_run(seed: int) -> tuple[MixtureModel, object]:
    """Train (and memoize) the reference 2-component 2D task for one seed."""
    if seed not in _TRAIN_CACHE:
        from dataclasses import replace

        model = MixtureModel.new(tight_training_corpus(), seed=seed)
        result = train_loop(model, replace(REFERENCE_TRAIN_CONFIG, seed=seed))
        _TRAIN_CACHE[seed] = (model, result)
    return _TRAIN_CACHE[seed]


def check_training_efficacy() -> CheckResult:
    """DSM loss collapses below 25% of its start; w=1 sampling finds the means."""
    start = time.time()
    ratios = []
    worst_mean_err = 0.0
    for seed in (0, 1, 2):
        model, result = training_reference_run(seed)
        dsm = result.losses("dsm")
        ratios.append(np.mean(dsm[-10:]) / np.mean(dsm[:10]))
        prior = PriorField.standard(1000, 2)
        for label in ("Anger", "Happy"):
            ctx = model.context(0, label)
            x, _ = sample(
                model.score_net,
                prior,
                ctx,
                SamplerConfig(steps=100, seed=seed * 31 + 5, intensity=1.0),
                model.schedule,
            )
            err = np.linalg.norm(x.mean(axis=0) - model.corpus.component_mean(label))
            worst_mean_err = max(worst_mean_err, err)
    ratio = float(np.mean(ratios))
    ok = ratio < 0.25 and worst_mean_err < 0.15
    return _result(
        "training-efficacy",
        start,
        ok,
        f"final/initial DSM {ratio:.3f} (limit 0.25); "
        f"worst conditional mean error {worst_mean_err:.3f} (limit 0.15)",
    )


# -- 9 -----------------------------------------------------------------------


def check_mcd_units() -> CheckResult:
    """MCD(x, x) = 0 exactly; a uniform 0.1 offset hits the closed form."""
    start = time.time()
    rng = make_rng(9, 0xCD)
    ceps = rng.standard_normal((40, 13))
    zero = audio.mcd(ceps, ceps)
    offset = audio.mcd(ceps + 0.1, ceps)
    expected = (10.0 / np.log(10.0)) * np.sqrt(0.26)
    ok = zero == 0.0 and abs(offset - expected) < 1e-9
    return _result(
        "mcd-units",
        start,
        ok,
        f"MCD(x,x)={zero}; offset {offset:.12f} vs closed form {expected:.12f}",
    )


# -- 10 ----------------------------------------------------------------------


def _predicted_tone_channel(freq: float) -> int:
    """Filterbank-geometry oracle: project a naive-DFT tone frame through
    the filterbank and take the argmax channel."""
    n = audio.N_FFT
    k = np.arange(n)
    frame = np.cos(2.0 * np.pi * freq * k / audio.SAMPLE_RATE)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)
    windowed = frame * window
    bins = np.arange(n // 2 + 1)
    # direct O(n^2) DFT
    basis = np.exp(-2j * np.pi * np.outer(bins, k) / n)
    spectrum = np.abs(basis @ windowed)
    return int(np.argmax(audio.mel_filterbank() @ spectrum))


def check_dsp_roundtrips() -> CheckResult:
    """Bit-stable WAV and mel round trips; tone lands in the predicted channel."""
    import tempfile
    from pathlib import Path

    from .tensorio import load_mel, save_mel

    start = time.time()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        # cosine phase keeps the reflect padding transparent at the edges
        t = np.arange(audio.SAMPLE_RATE) / audio.SAMPLE_RATE
        tone = audio.AudioBuffer(0.6 * np.cos(2.0 * np.pi * 440.0 * t))
        wav_a, wav_b = tmp / "a.wav", tmp / "b.wav"
        audio.write_wav(wav_a, tone)
        audio.write_wav(wav_b, audio.read_wav(wav_a))
        wav_stable = wav_a.read_bytes() == wav_b.read_bytes()

        mel = audio.mel_spectrogram(audio.read_wav(wav_a))
        mel_a, mel_b = tmp / "a.mel", tmp / "b.mel"
        save_mel(mel_a, mel.values, mel.metadata())
        values, meta = load_mel(mel_a)
        save_mel(mel_b, values, meta)
        mel_stable = mel_a.read_bytes() == mel_b.read_bytes()

        predicted = _predicted_tone_channel(440.0)
        argmaxes = mel.values.argmax(axis=1)
        tone_ok = bool(np.all(argmaxes == predicted))
    ok = wav_stable and mel_stable and tone_ok
    return _result(
        "dsp-roundtrips",
        start,
        ok,
        f"WAV bytes stable: {wav_stable}; mel bytes stable: {mel_stable}; "
        f"440 Hz argmax channel == {predicted}: {tone_ok}",
    )


# ---------------------------------------------------------------------------

ACCEPTANCE_CHECKS = [
    ("forward-marginal-mc", check_forward_marginal_mc, True),
    ("stationarity", check_stationarity, True),
    ("oracle-recovery", check_oracle_recovery, True),
    ("guidance-identities", check_guidance_identities, True),
    ("intensity-monotonicity", check_intensity_monotonicity, True),
    ("conditioning-dropout", check_null_dropout, True),
    ("gradient-integrity", check_gradient_integrity, True),
    ("training-efficacy", check_training_efficacy, False),
    ("mcd-units", check_mcd_units, True),
    ("dsp-roundtrips", check_dsp_roundtrips, True),
]


def run_acceptance(include_slow: bool = True, names=None) -> list[CheckResult]:
    """Run the acceptance checks; ``include_slow=False`` skips training runs."""
    results = []
    known = {name for name, _, _ in ACCEPTANCE_CHECKS}
    if names:
        unknown = set(names) - known
        if unknown:
            raise InputError(f"unknown check name(s): {sorted(unknown)}")
    for name, fn, quick in ACCEPTANCE_CHECKS:
        if names and name not in names:
            continue
        if not include_slow and not quick and not (names and name in names):
            continue
        results.append(fn())
    return results
