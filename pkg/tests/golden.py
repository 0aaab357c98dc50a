"""Fixed synthetic run whose heat-map overlay is frozen in data/.

Run ``python tests/golden.py`` to regenerate after an intentional change.
"""

from pathlib import Path

from shopflow.analytics import heatmap_from_tracks, normalize, render_overlay
from shopflow.detect import ScriptedProvider
from shopflow.evalkit.scene import Agent, SyntheticScene, generate_scene
from shopflow.netpbm import write_netpbm
from shopflow.pipeline import PipelineConfig, Recorder, run_pipeline

GOLDEN = Path(__file__).parent / "data" / "golden_overlay.ppm"


def golden_overlay():
    a = Agent(1, ((0, 30.0, 40.0), (47, 90.0, 50.0)), 16.0, 30.0, 5)
    b = Agent(2, ((0, 110.0, 30.0), (47, 100.0, 60.0)), 14.0, 28.0, 6)
    scene = generate_scene(SyntheticScene(128, 96, 25.0, 48, (a, b), background_seed=3))
    rec = Recorder()
    pcfg = PipelineConfig(width=128, height=96)
    run_pipeline(scene.frames(), ScriptedProvider(scene.truth, 48), pcfg, sinks=[rec], pipelined=False)
    hm = heatmap_from_tracks(rec.frame_tracks(), 128, 96)
    return render_overlay(normalize(hm), scene.frame(0))


if __name__ == "__main__":
    GOLDEN.parent.mkdir(exist_ok=True)
    write_netpbm(GOLDEN, golden_overlay())
    print(GOLDEN)
