#!/usr/bin/env python3
"""End-to-end smoke test for the triplane_py extension module.

Builds a tiny dataset, fits a small model, inverts a view with both a
feed-forward and an optimization method, and round-trips a checkpoint.
Run from the repo root after `cargo build -p triplane-py`:

    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent


def import_triplane_py():
    """Copy the built cdylib next to a temp dir under an importable name."""
    candidates = [
        ROOT / "target" / "release" / "libtriplane_py.so",
        ROOT / "target" / "debug" / "libtriplane_py.so",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("libtriplane_py.so not found; run `cargo build -p triplane-py` first")
    lib = max(built, key=lambda p: p.stat().st_mtime)
    stage = Path(tempfile.mkdtemp(prefix="triplane_py_"))
    shutil.copy2(lib, stage / "triplane_py.so")
    sys.path.insert(0, str(stage))
    import triplane_py

    return triplane_py


def to_np(img):
    shape, data = img
    return np.asarray(data, dtype=np.float32).reshape(shape)


def to_img(arr):
    return (list(arr.shape), arr.ravel().astype(np.float32).tolist())


def check(name, cond):
    print(f"{'PASS' if cond else 'FAIL'}  {name}")
    if not cond:
        sys.exit(1)


def main():
    tp = import_triplane_py()
    work = Path(tempfile.mkdtemp(prefix="triplane_smoke_"))
    res = 64  # the encoders are built for 2x the tri-plane resolution

    n = tp.build_dataset(work / "data", scenes=2, views=2, res=res, seed=5)
    check("dataset written", n == 2)

    img0, yaw0, pitch0 = tp.dataset_view(work / "data", 0, 0)
    x0 = to_np(img0)
    check("dataset view shape", x0.shape == (3, res, res))
    check("dataset view range", 0.0 <= x0.min() and x0.max() <= 1.0)

    m = tp.Model(n_scenes=2, seed=7)
    check("model resolution", m.resolution == res)

    losses = m.fit(work / "data", steps=20, batch=2, lr=2e-3, seed=17)
    check("fit ran", len(losses) == 20 and math.isfinite(losses[-1]))
    check("fit reduced loss", losses[-1] < losses[0])
    psnr_train = m.train_view_psnr(work / "data")
    print(f"      fit loss {losses[0]:.4f} -> {losses[-1]:.4f}, train-view PSNR {psnr_train:.2f} dB")

    scene_img = to_np(m.render_scene(0, yaw=0.2))
    check("scene render shape", scene_img.shape == (3, res, res))
    sample_img = to_np(m.render_sample(seed=11, yaw=-0.3, truncation=0.7))
    check("sample render finite", np.isfinite(sample_img).all())

    enc_losses = m.train_encoders(
        work / "data", total=10, second_start=2, freeze_first=7, batch=1, generated_pool=2, seed=23
    )
    check("encoder training ran", len(enc_losses) == 10 and math.isfinite(enc_losses[-1]))

    methods = tp.method_names()
    check("seven methods", len(methods) == 7 and "encoder+cttr" in methods)

    inv_ff = m.invert(img0, yaw0, pitch0, method="encoder")
    rec_ff = to_np(inv_ff.image())
    check("feed-forward inversion shape", rec_ff.shape == (3, res, res))
    check("feed-forward stages timed", len(inv_ff.stages()) >= 1 and inv_ff.seconds() > 0)
    novel = to_np(inv_ff.render(yaw=0.5))
    check("novel view render", novel.shape == (3, res, res) and np.isfinite(novel).all())

    inv_opt = m.invert(img0, yaw0, pitch0, method="wplus", wplus_steps=12)
    psnr_opt = tp.psnr(inv_opt.image(), img0)
    psnr_ff = tp.psnr(inv_ff.image(), img0)
    print(f"      same-view PSNR: wplus(12) {psnr_opt:.2f} dB, encoder {psnr_ff:.2f} dB")
    check("inversion PSNR finite", math.isfinite(psnr_opt) and math.isfinite(psnr_ff))

    check("ms_ssim self is 1", abs(tp.ms_ssim(img0, img0) - 1.0) < 1e-6)
    a = to_img(np.full((3, res, res), 0.5, dtype=np.float32))
    b = to_img(np.full((3, res, res), 0.6, dtype=np.float32))
    # 0.6 is not exactly representable in f32; ~2e-6 dB of rounding remains.
    check("psnr of 0.1 offset is 20 dB", abs(tp.psnr(a, b) - 20.0) < 1e-5)

    m.save(work / "model.tpnc")
    m2 = tp.Model.load(work / "model.tpnc")
    check("checkpoint latents", m2.n_scenes == 2 and m2.seed == 7)
    r1 = to_np(m.render_scene(1, yaw=0.4))
    r2 = to_np(m2.render_scene(1, yaw=0.4))
    check("checkpoint round-trip render bit-identical", np.array_equal(r1, r2))

    tp.save_png(work / "rec.png", inv_ff.image())
    back = to_np(tp.load_png(work / "rec.png"))
    check("png round-trip", np.abs(back - np.clip(rec_ff, 0, 1)).max() <= 0.5 / 255 + 1e-6)

    rows = tp.gradcheck(seed=7, instances=2)
    worst = max(rows, key=lambda r: r[1] / r[2])
    print(f"      gradcheck: {len(rows)} ops, worst {worst[0]} rel {worst[1]:.2e} (tol {worst[2]:.0e})")
    check("gradient checks pass", all(r[3] for r in rows))

    shutil.rmtree(work, ignore_errors=True)
    print("all smoke tests passed")


if __name__ == "__main__":
    main()
