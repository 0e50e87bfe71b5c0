import time, pathlib, tempfile
import numpy as np
from curvetext.corpus import SplitConfig, generate_split
from curvetext.decoder import Vocabulary
from curvetext.training import Model, TrainConfig, train, normalize_text, load_manifest, _load_images

root = pathlib.Path(tempfile.mkdtemp(prefix="p1_"))
cfg1 = SplitConfig(mix={"none": 1.0}, min_len=1, max_len=1, noise=0.0)
train_man = generate_split(root / "train", 500, seed=101, cfg=cfg1)
eval_man = generate_split(root / "eval", 48, seed=202, cfg=cfg1)
eval_samples = _load_images(load_manifest(eval_man))

model = Model(Vocabulary.toy(), scale=4, grid=(3, 10, 4), init_seed=0)
cfg = TrainConfig(steps=800, seed=0, lr=1e-3, rect_warmup_steps=10**9)
t0 = time.time()

def probe(step, loss):
    if (step + 1) % 100 == 0:
        acc = sum(
            int(normalize_text(model.recognize_image(img, k=1)) == normalize_text(label))
            for img, label in eval_samples
        )
        print(f"step {step+1}: loss={loss:.3f} heldout={acc/len(eval_samples):.3f} [{time.time()-t0:.0f}s]", flush=True)
        return acc / len(eval_samples) >= 0.98
    return False

train(model, train_man, cfg, on_step=probe)
print("done", flush=True)
