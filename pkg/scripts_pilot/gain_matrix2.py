import sys, time, pathlib, tempfile
import numpy as np
from curvetext.corpus import SplitConfig, generate_split
from curvetext.decoder import Vocabulary
from curvetext.training import Model, TrainConfig, train, normalize_text, load_manifest, _load_images

root = pathlib.Path(tempfile.mkdtemp(prefix="gm2_"))
train_man = generate_split(root / "train", 2000, seed=101, cfg=SplitConfig(mix={"none": 1.0}))
eval_man = generate_split(root / "eval", 60, seed=202, cfg=SplitConfig(mix={"none": 1.0}))
eval_samples = _load_images(load_manifest(eval_man))


def run(tag, lstm_gain, att_vw_gain, att_w_gain, lr, steps=1500, batch=8):
    model = Model(Vocabulary.toy(), scale=4, grid=(3, 10, 4), init_seed=0)
    for n, t in model.store.items():
        if ".lstm" in n and (n.endswith("w_ih") or n.endswith("w_hh")):
            t.data *= lstm_gain / 2.0   # built with gain 2
        if n in ("decoder.att.w_state", "decoder.att.v_feat"):
            t.data *= att_vw_gain / 4.0  # built with gain 4
        if n == "decoder.att.w":
            t.data *= att_w_gain / 4.0
    cfg = TrainConfig(steps=steps, seed=0, lr=lr, batch_size=batch, rect_warmup_steps=10**9)
    t0 = time.time()

    def probe(step, loss):
        if (step + 1) % 250 == 0:
            acc = sum(
                int(normalize_text(model.recognize_image(img, k=1)) == normalize_text(label))
                for img, label in eval_samples
            )
            print(f"[{tag}] step {step+1}: loss={loss:.3f} heldout={acc/60:.3f} [{time.time()-t0:.0f}s]",
                  flush=True)
            return acc / 60 >= 0.95
        return False

    train(model, train_man, cfg, on_step=probe)
    print(f"[{tag}] done [{time.time()-t0:.0f}s]", flush=True)


which = sys.argv[1]
if which == "A":
    run("lstm3_att4_lr1e-3", 3.0, 4.0, 4.0, 1e-3)
elif which == "B":
    run("lstm2_att8_lr3e-3", 2.0, 8.0, 8.0, 3e-3)
elif which == "C":
    run("lstm3_att8_lr3e-3", 3.0, 8.0, 8.0, 3e-3)
elif which == "D":
    run("lstm2_att4_lr3e-3_b16", 2.0, 4.0, 4.0, 3e-3, batch=16, steps=1000)
elif which == "E":
    run("lstm2_vw4_w16_lr1e-3", 2.0, 4.0, 16.0, 1e-3)
