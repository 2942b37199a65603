import json
import time

import numpy as np

import hiddenterms as ht
from hiddenterms.sampling import union_time_grid

sys_ = ht.lotka_volterra()
sch = ht.Schedule.count(10)
ref = ht.rk4_integrate(sys_, union_time_grid(3.0, sch.resolve_times(3.0)))
ds = ht.sample_measurements(ref, sch)
coll = ht.collocation_for(sys_, 1000, 0, seed=0)

rows = []
for norm in (True, False):
    for lr in (1e-3, 3e-3, 1e-2):
        cfg = ht.TrainConfig(iterations=30000, seed=0, learning_rate=lr,
                             normalize_inputs=norm)
        res = ht.train(sys_, ds, coll, cfg, reference=ref)
        r = res.report
        rows.append(dict(norm=norm, lr=lr, hidden=r.hidden_mse,
                         surr=r.surrogate_mse,
                         lm=r.trace_measurement[-1], lp=r.trace_pinn[-1],
                         secs=round(r.elapsed_seconds)))
        print(rows[-1], flush=True)
with open("calib2.json", "w") as fh:
    json.dump(rows, fh, indent=1)
print("done", time.strftime("%H:%M:%S"))
