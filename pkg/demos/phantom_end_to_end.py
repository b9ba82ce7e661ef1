"""Phantom -> segmenter -> files -> CLI evaluation, all in a temp directory."""

import json
import tempfile
from pathlib import Path

from lotus_eval import cli
from lotus_eval.formats import ResultsRecord, write_mask
from lotus_eval.phantom import PhantomSpec, Shape, generate_phantom, region_grow, threshold_segment

spec = PhantomSpec(48, 48, 24, (Shape("sphere", (24, 24, 10.5), 8.0, 0.8),
                                Shape("box", (10, 36, 12), (6, 6, 4), 0.6)),
                   spacing=(0.9, 0.9, 2.5), background=0.1, noise=0.05)
image, gt = generate_phantom(spec, seed=1)
print("tumour voxels:", gt.count)

segmenters = {
    "grower": region_grow(image, [(24, 24, 10), (10, 36, 12)], tolerance=0.1),
    "thresholder": threshold_segment(image, 0.3),
}

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    write_mask(tmp / "gt.lmsk", gt)
    records = []
    for name, pred in segmenters.items():
        write_mask(tmp / f"{name}.lmsk", pred)
        manifest = tmp / f"{name}.json"
        manifest.write_text(json.dumps({
            "team_id": name, "report_score": 7.0,
            "subjects": [{"subject_id": "phantom", "ground_truth": "gt.lmsk", "prediction": f"{name}.lmsk"}],
        }))
        out = tmp / f"{name}-results.json"
        code = cli.main(["evaluate", str(manifest), "-o", str(out), "--validation", str(manifest)])
        print(f"evaluate {name}: exit {code}")
        print("  stored modes:", sorted(ResultsRecord.read(out).metrics))
        records.append(str(out))
    cli.main(["score", *records, "-o", str(tmp / "board.json")])
