"""Write the reference models and sample run configurations as JSON."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from rs_regime.models import merton_model, model_m2, model_m3, random_no_jump_model

HERE = Path(__file__).resolve().parent / "configs"


def dump(obj, name: str) -> None:
    with open(HERE / name, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def main() -> None:
    HERE.mkdir(exist_ok=True)
    dump(merton_model().to_dict(), "merton.json")
    dump(model_m2().to_dict(), "m2.json")
    dump(model_m3().to_dict(), "m3.json")
    dump(random_no_jump_model(np.random.default_rng(7), 2, 2).to_dict(), "nojump2.json")

    base = {"grid": {"n_steps": 200}, "tolerances": {"grad": 1e-10, "ode": 1e-8,
                                                     "feasibility_margin": 1e-10}}
    dump({**base, "model_path": "m2.json", "output_path": "../../runs/m2_solve"}, "m2_solve.json")
    dump({**base, "model_path": "m2.json", "output_path": "../../runs/m2_kelly"}, "m2_kelly.json")
    dump({**base, "model_path": "m2.json", "output_path": "../../runs/m2_compare"},
         "m2_compare.json")
    dump({"model_path": "m2.json", "output_path": "../../runs/m2_simulate",
          "mc": {"n_paths": 100000, "seed": 20240611, "k_sigma": 3, "i0": 0},
          "strategy": {"surface": "../../runs/m2_solve/surface.json"}}, "m2_simulate.json")
    dump({"model_path": "m2.json", "output_path": "../../runs/m2_martingale",
          "mc": {"n_paths": 1000000, "seed": 11, "k_sigma": 3},
          "strategy": {"surface": "../../runs/m2_solve/surface.json"}}, "m2_martingale.json")
    dump({"model_path": "m2.json", "output_path": "../../runs/m2_generator",
          "mc": {"n_paths": 200000, "seed": 12, "k_sigma": 3},
          "strategy": {"constant": [0.5]}}, "m2_generator.json")
    dump({**base, "model_path": "m3.json", "output_path": "../../runs/m3_solve"}, "m3_solve.json")
    dump({**base, "model_path": "nojump2.json", "output_path": "../../runs/nojump2_solve"},
         "nojump2_solve.json")


if __name__ == "__main__":
    main()
