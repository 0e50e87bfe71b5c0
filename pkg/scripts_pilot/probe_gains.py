import sys, time, pathlib, tempfile
import numpy as np
from curvetext.corpus import SplitConfig, generate_split
from curvetext.decoder import Vocabulary
from curvetext.training import Model, TrainConfig, train, normalize_text, load_manifest, _load_images

mode = sys.argv[1]
root = pathlib.Path(tempfile.mkdtemp(prefix=f"pg{mode}_"))
c1 = SplitConfig(mix={"none": 1.0}, min_len=1, max_len=1, noise=0.0)
train_man = generate_split(root / "train", 500, seed=101, cfg=c1)
eval_man = generate_split(root / "eval", 48, seed=202, cfg=c1)
eval_samples = _load_images(load_manifest(eval_man))


def run(tag, lstm_gain, att_w_gain, lr, batch, steps=600):
    model = Model(Vocabulary.toy(), scale=4, grid=(3, 10, 4), init_seed=0)
    for n, t in model.store.items():
        if ".lstm" in n and (n.endswith("w_ih") or n.endswith("w_hh")):
            t.data *= lstm_gain / 2.0
        if n == "decoder.att.w":
            t.data *= att_w_gain / 4.0
    cfg = TrainConfig(steps=steps, seed=0, lr=lr, batch_size=batch, rect_warmup_steps=10**9)
    t0 = time.time()

    def probe(step, loss):
        if (step + 1) % 50 == 0:
            acc = sum(
                int(normalize_text(model.recognize_image(img, k=1)) == normalize_text(label))
                for img, label in eval_samples
            )
            print(f"[{tag}] step {step+1}: loss={loss:.3f} heldout={acc/len(eval_samples):.3f} "
                  f"[{time.time()-t0:.0f}s]", flush=True)
            return acc / len(eval_samples) >= 0.98
        return False

    train(model, train_man, cfg, on_step=probe)
    print(f"[{tag}] done [{time.time()-t0:.0f}s]", flush=True)


if mode == "F":
    run("lstm4_w24_lr1e-3_b8", 4.0, 24.0, 1e-3, 8)
elif mode == "G":
    run("lstm4_w24_lr1e-3_b16", 4.0, 24.0, 1e-3, 16, steps=400)
elif mode == "H":
    run("lstm4_w12_lr1e-3_b8", 4.0, 12.0, 1e-3, 8)
