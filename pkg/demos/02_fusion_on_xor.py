"""Why intermediate fusion: a planted XOR between labs and notes.

Each modality on its own is uninformative (the label is lab_flag XOR
text_flag) so every unimodal model sits near chance. The intermediate
fusion head sees both latent representations at once and recovers the
signal. One seed takes about a minute on a laptop CPU.

    python demos/02_fusion_on_xor.py [seed]
"""
import sys

import numpy as np

from mmpred.evaluation import auroc, stratified_split
from mmpred.fusion import ModalityModel, build_intermediate, train_intermediate
from mmpred.models import make_model
from mmpred.preprocess import Preprocessor
from mmpred.synthgen import GeneratorConfig, SignalPlan, XorPlan, generate_cohort

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = GeneratorConfig(n_patients=800, positive_fraction=0.5, seed=seed,
                      signal=SignalPlan(xor=XorPlan(lab_shift=6.0)), patient_lab_sd=0.2,
                      n_lab_channels=4, n_med_channels=4, notes_per_patient_range=(2, 4))
patients = generate_cohort(cfg)
y = np.array([p.y for p in patients])
dev, test = stratified_split(y, 0.8, seed)
tr, va = stratified_split(y[dev], 0.8, seed)
tr, va = dev[tr], dev[va]

pre = Preprocessor(tokenizer_vocab_size=300, max_tokens=64).fit([patients[i] for i in dev])
inp = pre.transform(patients).inputs()
sub = lambda idx: {k: v[idx] for k, v in inp.items()}

specs = {
    "static": ("mlp", {}),
    "labs": ("gru_rnn", {}),
    "meds": ("gru_rnn", {}),
    "text": ("text_encoder", dict(dim=16, n_heads=2, ff_dim=32, n_blocks=1,
                                  n_tokens=len(pre.vocab.tokenizer), max_len=64)),
}
donors = {}
for m, (kind, hp) in specs.items():
    mm = ModalityModel(m, make_model(kind, seed=seed, max_epochs=40, patience=8, **hp))
    mm.fit(sub(tr), y[tr], sub(va), y[va])
    donors[m] = mm.model
    print(f"{m:>7} ({kind}): test AUROC {auroc(mm.predict_proba(sub(test)), y[test]):.3f}")

# early fusion only sees time-averaged structured data, so it misses the text flag too
ef = ModalityModel("early", make_model("gbt", n_estimators=100, max_depth=3)).fit(sub(tr), y[tr])
print(f"{'EF':>7} (gbt): test AUROC {auroc(ef.predict_proba(sub(test)), y[test]):.3f}")

# decapitate the donors, concatenate latents, train head frozen then fine-tune
im = build_intermediate(donors, head_units=32, dropout=0.2, seed=seed)
train_intermediate(im, sub(tr), y[tr], sub(va), y[va],
                   stage1=dict(max_epochs=100, patience=20, lr=3e-2),
                   stage2=dict(max_epochs=120, patience=25))
print(f"{'IF':>7}: test AUROC {auroc(im.predict_proba(sub(test)), y[test]):.3f}")
