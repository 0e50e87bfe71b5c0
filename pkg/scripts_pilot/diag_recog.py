import time, pathlib, tempfile
import numpy as np
from curvetext.corpus import SplitConfig, generate_split
from curvetext.decoder import Vocabulary
from curvetext.training import Model, TrainConfig, train, normalize_text, load_manifest, _load_images

root = pathlib.Path(tempfile.mkdtemp(prefix="diagrec_"))
train_man = generate_split(root / "train", 2000, seed=101, cfg=SplitConfig(mix={"none": 1.0}))
eval_man = generate_split(root / "eval", 60, seed=202, cfg=SplitConfig(mix={"none": 1.0}))
eval_samples = _load_images(load_manifest(eval_man))

for lr in (1e-3, 3e-3):
    model = Model(Vocabulary.toy(), scale=4, grid=(3, 10, 4), init_seed=0)
    cfg = TrainConfig(steps=2500, seed=0, lr=lr, rect_warmup_steps=10**9)

    t0 = time.time()

    def probe(step, loss, model=model, lr=lr, t0=t0):
        if (step + 1) % 250 == 0:
            acc = sum(
                int(normalize_text(model.recognize_image(img, k=1)) == normalize_text(label))
                for img, label in eval_samples
            )
            print(f"lr={lr} step {step+1}: loss={loss:.3f} heldout={acc/60:.3f} [{time.time()-t0:.0f}s]", flush=True)
            return acc / 60 >= 0.95
        return False

    train(model, train_man, cfg, on_step=probe)
    print(f"lr={lr} done [{time.time()-t0:.0f}s]", flush=True)
