"""Build a small synthetic cohort, encode it into the four modalities and
look at what one patient becomes.

    python demos/01_synthetic_cohort.py
"""
import numpy as np

from mmpred.evaluation import stratified_split
from mmpred.preprocess import Preprocessor, censor_text
from mmpred.synthgen import cohort_fixtures, generate_cohort

# a lung-like cohort scaled down to 200 patients, same prevalence
cfg = cohort_fixtures(seed=0)["lung-like"]
cfg.n_patients = 200
patients = generate_cohort(cfg)
y = np.array([p.y for p in patients])
print(f"{len(patients)} patients, {y.sum()} develop metastasis in month 7")

# vocabularies and the tokenizer are fit on development patients only
dev, test = stratified_split(y, 0.8, seed=0)
pre = Preprocessor(tokenizer_vocab_size=400, max_tokens=128).fit([patients[i] for i in dev])
data = pre.transform(patients)
inp = data.inputs()
for name, arr in inp.items():
    print(f"{name:>6}: {arr.shape}")

p = patients[int(np.flatnonzero(y)[0])]
s = data.sample(int(np.flatnonzero(y)[0]))
print("\nstatic vector length", len(s.static), "| labs", s.labs.shape, "| meds", s.meds.shape)
print("missing lab months are filled with -1:", np.round(s.labs[:, :3], 2).tolist())

# censoring drops whole sentences mentioning metastasis or a TNM stage
note = "Patient stable. Staging T2 N1 M1 discussed. Patent anastomosis noted."
print("\nbefore:", note)
print("after: ", censor_text(note))
