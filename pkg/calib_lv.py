import json
import time

import numpy as np

import hiddenterms as ht
from hiddenterms.sampling import union_time_grid

out = {}
for n, npts in ((10, 1000), (5, 100), (5, 1000), (10, 10000)):
    sys_ = ht.lotka_volterra()
    sch = ht.Schedule.count(n)
    ref = ht.rk4_integrate(sys_, union_time_grid(3.0, sch.resolve_times(3.0)))
    ds = ht.sample_measurements(ref, sch)
    coll = ht.collocation_for(sys_, npts, 0, seed=0)
    row = []
    for it in (10000, 30000):
        res = ht.train(sys_, ds, coll, ht.TrainConfig(iterations=it, seed=0),
                       reference=ref)
        row.append((it, res.report.hidden_mse, res.report.surrogate_mse,
                    round(res.report.elapsed_seconds, 1)))
        print(n, npts, row[-1], flush=True)
    out[f"n{n}_np{npts}"] = row
    with open("calib_lv.json", "w") as fh:
        json.dump(out, fh, indent=1)
print("done", time.strftime("%H:%M:%S"))
