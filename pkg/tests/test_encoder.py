import math

import numpy as np
import pytest
from scipy.special import erf

from cserkit import encoder as enc
from cserkit import gradcheck
from cserkit.examplegen import MlmExample, PairExample


def small_cfg(**kw):
    base = dict(vocab_size=30, max_len=16, layers=2, hidden=16, heads=2, ffn_dim=32, dropout=0.0)
    base.update(kw)
    return enc.EncoderConfig(**base)


def jittered(cfg, seed=0, scale=0.2):
    p = enc.init_params(cfg, seed)
    r = np.random.default_rng(seed + 1)
    for a in p.arrays.values():
        a += r.normal(0, scale, a.shape)
    return p


def test_config_validation():
    with pytest.raises(ValueError):
        small_cfg(hidden=15, heads=2)
    with pytest.raises(ValueError):
        small_cfg(layers=0)
    with pytest.raises(ValueError):
        enc.EncoderConfig.from_dict({"vocab_size": 5, "bogus": 1})


def test_init_deterministic_and_conventions():
    cfg = small_cfg()
    a, b = enc.init_params(cfg, 3), enc.init_params(cfg, 3)
    for n in a.names():
        assert a[n].tobytes() == b[n].tobytes()
        if n.endswith(".b") or n == "mlm.bias":
            assert not a[n].any()
        if n.endswith(".g"):
            assert np.all(a[n] == 1.0)
    assert not np.array_equal(a["tok_emb"], enc.init_params(cfg, 4)["tok_emb"])


def test_init_statistics():
    cfg = enc.EncoderConfig(vocab_size=1000, max_len=8, layers=1, hidden=100, heads=2, ffn_dim=8)
    w = enc.init_params(cfg, 0)["tok_emb"]
    assert w.size == 100_000
    assert abs(w.mean()) <= 0.003
    assert abs(w.std() - 0.02) <= 0.002


def _pad_batch(seqs, T):
    ids = np.zeros((len(seqs), T), dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def test_batch_invariance_and_padding():
    cfg = small_cfg()
    p = jittered(cfg)
    rng = np.random.default_rng(0)
    seqs = [list(rng.integers(5, 30, size=rng.integers(3, 12))) for _ in range(8)]
    ids, mask = _pad_batch(seqs, 12)
    full = enc.encode(p, ids, mask)
    for i in range(8):
        one = enc.encode(p, ids[i:i + 1], mask[i:i + 1])
        assert np.max(np.abs(one[0] - full[i])) < 1e-6
    # scribble over the padding; real positions must not move
    ids2 = np.where(mask, ids, rng.integers(0, 30, size=ids.shape))
    out2 = enc.encode(p, ids2, mask)
    assert np.max(np.abs((out2 - full)[mask])) < 1e-6


def test_overlong_input_rejected():
    p = enc.init_params(small_cfg(max_len=8), 0)
    with pytest.raises(ValueError):
        enc.encode(p, np.ones((1, 9), dtype=np.int64))


def _naive_ln(x, g, b):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [g[k] * (x[k] - mu) / math.sqrt(var + enc.LN_EPS) + b[k] for k in range(len(x))]


def _naive_gelu(x):
    return x * 0.5 * (1 + erf(x / math.sqrt(2)))


def _naive_encode(p, ids, n_real):
    """One layer, position by position, head by head, with plain Python loops."""
    cfg = p.cfg
    H, nh = cfg.hidden, cfg.heads
    dh = H // nh
    T = len(ids)
    x = [_naive_ln([p["tok_emb"][ids[t], k] + p["pos_emb"][t, k] for k in range(H)],
                   p["emb_ln.g"], p["emb_ln.b"]) for t in range(T)]

    def aff(v, w, b):
        return [sum(v[i] * w[i, j] for i in range(len(v))) + b[j] for j in range(w.shape[1])]

    q = [aff(x[t], p["layer0.q.w"], p["layer0.q.b"]) for t in range(T)]
    k = [aff(x[t], p["layer0.k.w"], p["layer0.k.b"]) for t in range(T)]
    v = [aff(x[t], p["layer0.v.w"], p["layer0.v.b"]) for t in range(T)]
    out = []
    for t in range(T):
        ctx = [0.0] * H
        for h in range(nh):
            sl = range(h * dh, (h + 1) * dh)
            scores = [sum(q[t][c] * k[s][c] for c in sl) / math.sqrt(dh) for s in range(n_real)]
            m = max(scores)
            e = [math.exp(s - m) for s in scores]
            z = sum(e)
            for c in sl:
                ctx[c] = sum(e[s] / z * v[s][c] for s in range(n_real))
        a = aff(ctx, p["layer0.o.w"], p["layer0.o.b"])
        h1 = _naive_ln([x[t][c] + a[c] for c in range(H)], p["layer0.ln1.g"], p["layer0.ln1.b"])
        f = [_naive_gelu(u) for u in aff(h1, p["layer0.ffn1.w"], p["layer0.ffn1.b"])]
        f2 = aff(f, p["layer0.ffn2.w"], p["layer0.ffn2.b"])
        out.append(_naive_ln([h1[c] + f2[c] for c in range(H)], p["layer0.ln2.g"], p["layer0.ln2.b"]))
    return np.array(out)


def test_encode_matches_naive_oracle():
    cfg = small_cfg(layers=1, hidden=8, heads=2, ffn_dim=12)
    p = jittered(cfg, 5, 0.5)
    ids = [2, 7, 9, 11, 3, 0, 0]
    n_real = 5
    got = enc.encode(p, np.array([ids]), np.array([[1] * n_real + [0, 0]]))[0]
    want = _naive_encode(p, ids, n_real)
    assert np.max(np.abs(got[:n_real] - want[:n_real])) < 1e-6


def test_span_max_pool():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(9, 6))
    assert np.array_equal(enc.span_max_pool(h, (3, 4)), h[3])
    dom = h.copy()
    dom[5] = h.max() + 1
    assert np.array_equal(enc.span_max_pool(dom, (2, 7)), dom[5])
    want = [max(h[t, d] for t in range(2, 7)) for d in range(6)]
    assert np.array_equal(enc.span_max_pool(h, (2, 7)), want)
    for bad in [(3, 3), (-1, 2), (5, 10)]:
        with pytest.raises(ValueError):
            enc.span_max_pool(h, bad)


def test_pair_logits_hand_unrolled():
    cfg = small_cfg()
    p = jittered(cfg, 2)
    rng = np.random.default_rng(2)
    h = rng.normal(size=(10, cfg.hidden))
    for task in ("dsp", "dsp3", "drp"):
        got = enc.pair_logits(p, h, (1, 3), (4, 7), task)
        z = list(np.max(h[1:3], 0)) + list(np.max(h[4:7], 0))
        for layer in range(1, 5):
            w, b = p[f"{task}.mlp{layer}.w"], p[f"{task}.mlp{layer}.b"]
            z = [sum(z[i] * w[i, j] for i in range(len(z))) + b[j] for j in range(w.shape[1])]
            if layer < 4:
                z = [max(u, 0.0) for u in z]
        assert len(got) == cfg.num_classes[task]
        assert np.max(np.abs(got - np.array(z))) < 1e-8
    swapped = enc.pair_logits(p, h, (4, 7), (1, 3), "dsp")
    assert not np.allclose(swapped, enc.pair_logits(p, h, (1, 3), (4, 7), "dsp"))
    with pytest.raises(ValueError):
        enc.pair_logits(p, h, (1, 3), (4, 7), "mlm")


def test_pair_logits_zero_hidden_is_bias_path():
    cfg = small_cfg()
    p = jittered(cfg, 3)
    z = np.zeros(2 * cfg.hidden)
    for layer in range(1, 5):
        z = z @ p[f"dsp.mlp{layer}.w"] + p[f"dsp.mlp{layer}.b"]
        if layer < 4:
            z = np.maximum(z, 0)
    got = enc.pair_logits(p, np.zeros((6, cfg.hidden)), (1, 2), (2, 4), "dsp")
    assert np.allclose(got, z, atol=1e-12)


def test_pair_logits_only_see_spans():
    cfg = small_cfg()
    p = jittered(cfg, 4)
    h = np.random.default_rng(4).normal(size=(10, cfg.hidden))
    h2 = np.zeros_like(h)
    h2[1:3] = h[1:3]
    h2[5:8] = h[5:8]
    a = enc.pair_logits(p, h, (1, 3), (5, 8), "drp")
    assert np.array_equal(a, enc.pair_logits(p, h2, (1, 3), (5, 8), "drp"))


def test_cross_entropy_basics():
    for C in (2, 3, 12):
        assert math.isclose(enc.cross_entropy(np.zeros(C), 1), math.log(C), rel_tol=1e-12)
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 5))
    labels = rng.integers(0, 5, size=4)
    base = enc.cross_entropy(logits, labels)
    assert abs(enc.cross_entropy(logits + 37.5, labels) - base) < 1e-8
    scalar = 0.0
    for row, y in zip(logits, labels):
        scalar += -(row[y] - math.log(sum(math.exp(v) for v in row)))
    assert abs(base - scalar / 4) < 1e-12


def _examples():
    mlm = [MlmExample((2, 5, 6, 7, 3), (-1, 5, -1, 9, -1)), MlmExample((2, 8, 9, 3), (-1, -1, 11, -1))]
    dsp = [PairExample((2, 5, 6, 7, 8, 3), (1, 3), (3, 5), "dsp", 1),
           PairExample((2, 9, 10, 3), (2, 3), (1, 2), "dsp", 0)]
    return mlm, dsp


def test_loss_components():
    cfg = small_cfg()
    p = jittered(cfg)
    mlm, dsp = _examples()
    tl = enc.loss(p, enc.collate(dsp))
    assert set(tl.components) == {"dsp"} and tl.total == tl.dsp
    tl = enc.loss(p, [enc.collate(mlm), enc.collate(dsp)])
    assert set(tl.components) == {"mlm", "dsp"}
    assert math.isclose(tl.total, tl.mlm + tl.dsp)
    assert tl.mlm >= 0 and tl.dsp >= 0
    with pytest.raises(ValueError):
        enc.loss(p, enc.collate([MlmExample((2, 5, 3), (-1, -1, -1))]))
    with pytest.raises(ValueError):
        enc.collate([mlm[0], dsp[0]])


def test_loss_matches_scalar_oracle():
    cfg = small_cfg()
    p = jittered(cfg)
    _, dsp = _examples()
    total = 0.0
    for ex in dsp:
        h = enc.encode(p, np.array([ex.input_ids]))[0]
        lg = enc.pair_logits(p, h, ex.span_a, ex.span_b, "dsp")
        total += math.log(sum(math.exp(v) for v in lg)) - lg[ex.class_id]
    assert abs(enc.loss(p, enc.collate(dsp)).total - total / 2) < 1e-10


def test_unused_heads_get_zero_gradient():
    cfg = small_cfg()
    p = jittered(cfg)
    mlm, _ = _examples()
    _, g = enc.grad(p, enc.collate(mlm))
    for name in p.names():
        if enc.head_of(name) in ("dsp", "dsp3", "drp", "finetune"):
            assert not g[name].any(), name
    assert g["mlm.transform.w"].any()


def test_duplicated_batch_same_gradient():
    cfg = small_cfg()
    p = jittered(cfg)
    mlm, dsp = _examples()
    for exs in (mlm, dsp):
        _, g1 = enc.grad(p, enc.collate(exs))
        _, g2 = enc.grad(p, enc.collate(exs + exs))
        for n in p.names():
            assert np.allclose(g1[n], g2[n], atol=1e-12, rtol=1e-9)


def test_nonfinite_gradient_names_array():
    cfg = small_cfg()
    p = jittered(cfg)
    p.arrays["dsp.mlp4.b"][0] = np.inf
    _, dsp = _examples()
    with pytest.raises(enc.NumericError):
        enc.grad(p, enc.collate(dsp))


def test_encode_deterministic_without_dropout():
    cfg = small_cfg(dropout=0.0)
    p = jittered(cfg)
    ids = np.array([[2, 5, 6, 3]])
    assert np.array_equal(enc.encode(p, ids), enc.encode(p, ids))
    cfg_d = small_cfg(dropout=0.3)
    pd = enc.EncoderParams(cfg_d, p.arrays)
    a = enc.encode(pd, ids, rng=np.random.default_rng(1))
    b = enc.encode(pd, ids, rng=np.random.default_rng(1))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, enc.encode(pd, ids))


def test_dropout_gradient_matches_fd_with_fixed_rng():
    cfg = small_cfg(dropout=0.2)
    p = jittered(cfg)
    _, dsp = _examples()
    b = enc.collate(dsp)
    _, g = enc.grad(p, b, rng=np.random.default_rng(11))
    w = p.arrays["layer0.ffn1.w"]
    for idx in [(0, 0), (3, 7), (10, 20)]:
        old = w[idx]
        w[idx] = old + 1e-5
        lp = enc.loss(p, b, rng=np.random.default_rng(11)).total
        w[idx] = old - 1e-5
        lm = enc.loss(p, b, rng=np.random.default_rng(11)).total
        w[idx] = old
        assert gradcheck.rel_err(g["layer0.ffn1.w"][idx], (lp - lm) / 2e-5) < 1e-4


def test_gradcheck_all_heads():
    results = gradcheck.run(seed=0)
    heads = {r.head for r in results}
    assert heads == {"mlm", "dsp", "dsp3", "drp", "finetune"}
    bad = [r for r in results if not r.ok]
    assert not bad, bad


def test_frozen_encoder_grad_only_reaches_head():
    cfg = small_cfg()
    p = jittered(cfg)
    b = enc.sequence_batch([[2, 5, 6, 3], [2, 7, 3]], [1, 0])
    _, g = enc.grad(p, b, frozen_encoder=True)
    for n in p.names():
        if not n.startswith("finetune"):
            assert not g[n].any(), n


def test_checkpoint_round_trip(tmp_path):
    cfg = small_cfg()
    p = jittered(cfg)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    enc.save_checkpoint(a, p, "abc123", {"note": "x"})
    q, header = enc.load_checkpoint(a)
    assert header["manifest"]["vocab_hash"] == "abc123"
    assert header["extra"] == {"note": "x"}
    for n in p.names():
        assert np.array_equal(q[n], p[n].astype(np.float32).astype(np.float64))
    enc.save_checkpoint(b, q, "abc123", {"note": "x"})
    assert a.read_bytes() == b.read_bytes()
    data = bytearray(a.read_bytes())
    data[-1] ^= 0xFF
    a.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="digest"):
        enc.load_checkpoint(a)
