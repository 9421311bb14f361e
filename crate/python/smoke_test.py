"""Builds the extension, imports it and exercises the main entry points.

    python3 python/smoke_test.py
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build_and_import(workdir):
    subprocess.run(["cargo", "build", "--release", "-p", "bevsplat-py"], cwd=ROOT, check=True)
    lib = os.path.join(ROOT, "target", "release", "libbevsplat.so")
    shutil.copy(lib, os.path.join(workdir, "bevsplat.so"))
    sys.path.insert(0, workdir)
    import bevsplat

    return bevsplat


def main():
    with tempfile.TemporaryDirectory() as tmp:
        bs = build_and_import(tmp)

        cfg = bs.RenderConfig()
        assert (cfg.height, cfg.width) == (200, 200)

        z, dz = bs.decode_depth(0.5, 100.0, 100.0)
        assert z == 1.0 and dz == -4.0

        scene = bs.GaussianScene(2)
        scene.add([0.25, -0.25, 0.0], [1.0, 1.0, 1.0], [1.0, 0.0, 0.0, 0.0], 0.8, [1.0, 0.5])
        assert len(scene) == 1 and scene.validate() == []
        grid = bs.render(scene, cfg)
        assert grid.shape == (200, 200, 2)
        assert math.isclose(grid.get(100, 100, 0), 0.8, rel_tol=1e-12)
        plain = cfg.without_thresholds()
        assert bs.render(scene, plain).tolist() == bs.render(scene, plain, naive=True).tolist()

        d = [0.0] * (200 * 200 * 2)
        d[(100 * 200 + 100) * 2] = 1.0
        grads = bs.render_backward(scene, cfg, bs.BevGrid(200, 200, 2, d))
        assert math.isclose(grads["opacity"][0], 1.0, rel_tol=1e-12)

        path = os.path.join(tmp, "s.gsb")
        scene.save(path)
        assert bs.GaussianScene.load(path).centers() == scene.centers()
        try:
            bs.GaussianScene.load(os.path.join(tmp, "missing.gsb"))
        except OSError as e:
            assert "missing.gsb" in str(e)
        else:
            raise AssertionError("expected OSError")

        assert grid.preview_ppm().startswith(b"P6\n200 200\n255\n")

        report, fitted = bs.fit("single-box", seed=0, steps=30)
        report = json.loads(report)
        assert report["losses"][-1] < report["losses"][0]
        assert len(fitted) > 0

        ok, lines = bs.run_gradcheck(seed=42)
        assert ok, "\n".join(lines)
    print("python smoke test passed")


if __name__ == "__main__":
    main()
