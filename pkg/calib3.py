import json
import time

import numpy as np

import hiddenterms as ht
from hiddenterms.sampling import union_time_grid

sys_ = ht.lotka_volterra()
sch = ht.Schedule.count(10)
ref = ht.rk4_integrate(sys_, union_time_grid(3.0, sch.resolve_times(3.0)))
ds = ht.sample_measurements(ref, sch)

rows = []
# long run at n_P=1e3: does the plateau keep sinking?
coll = ht.collocation_for(sys_, 1000, 0, seed=0)
for iters in (100000,):
    cfg = ht.TrainConfig(iterations=iters, seed=0)
    res = ht.train(sys_, ds, coll, cfg, reference=ref)
    r = res.report
    rows.append(dict(npts=1000, iters=iters, hidden=r.hidden_mse,
                     surr=r.surrogate_mse, lm=float(r.trace_measurement[-1]),
                     lp=float(r.trace_pinn[-1]), secs=round(r.elapsed_seconds)))
    print(rows[-1], flush=True)
    # loss decay profile
    tm = r.trace_measurement
    tp = r.trace_pinn
    for k in (1000, 3000, 10000, 30000, 60000, 99999):
        print(f"  it={k}: L_M={tm[k]:.3e} L_P={tp[k]:.3e}", flush=True)

# the actual criterion cell
coll4 = ht.collocation_for(sys_, 10000, 0, seed=0)
cfg = ht.TrainConfig(iterations=30000, seed=0)
res = ht.train(sys_, ds, coll4, cfg, reference=ref)
r = res.report
rows.append(dict(npts=10000, iters=30000, hidden=r.hidden_mse,
                 surr=r.surrogate_mse, lm=float(r.trace_measurement[-1]),
                 lp=float(r.trace_pinn[-1]), secs=round(r.elapsed_seconds)))
print(rows[-1], flush=True)

with open("calib3.json", "w") as fh:
    json.dump(rows, fh, indent=1)
print("done", time.strftime("%H:%M:%S"))
