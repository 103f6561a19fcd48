"""Exercises the semcorr_py bindings end to end on small synthetic data."""

import json
import os
import tempfile

import semcorr_py as sc


def main():
    ok, text = sc.verify_theory(0)
    assert ok, text
    table = sc.predictor_table()
    assert len(table) == 16
    best = max(table, key=lambda r: r[3])
    assert abs(best[3] - 0.9) < 1e-12

    assert sc.corruption_id("pr-04") == "pr-4"

    train = sc.Dataset.nli_task(0.9, 600, seed=1)
    test = sc.Dataset.nli_task(0.9, 400, seed=2, flip=True)
    assert len(train) == 600 and train.num_classes == 2
    premise, hypothesis = train.covariate(0)
    assert len(hypothesis) > 0

    shuffled = train.corrupt("nr-1", seed=3)
    a, b = train.covariate(5), shuffled.covariate(5)
    assert sorted(a[0]) == sorted(b[0])

    erm = sc.Model.train_erm(train, seed=4)
    dfl = sc.Model.train_scam(train, "dfl", "nr-1", seed=4)
    erm_acc = erm.evaluate(test)["average"]
    dfl_acc = dfl.evaluate(test)["average"]
    print(f"flipped nli: erm {erm_acc:.3f}  dfl {dfl_acc:.3f}")
    assert dfl_acc > erm_acc

    image = sc.Dataset.image_task(0.5, 200, seed=5, semantic_fidelity=1.0)
    h, w, c, values = image.covariate(0)
    assert len(values) == h * w * c
    masked = image.corrupt("rm-8", seed=0)
    assert len(masked) == len(image)

    with tempfile.TemporaryDirectory() as d:
        train.save(os.path.join(d, "train"))
        back = sc.Dataset.load(os.path.join(d, "train"))
        assert back.labels() == train.labels()
        dfl.save(os.path.join(d, "dfl.ckpt"))
        again = sc.Model.load(os.path.join(d, "dfl.ckpt"))
        assert again.predict_proba(test) == dfl.predict_proba(test)

    try:
        sc.Model.train_scam(train, "nope", "nr-1")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown method accepted")

    cfg = {
        "task": {"family": "nli", "rho_train": 0.9, "rho_test": 0.9, "flip_test": True,
                 "n_train": 300, "n_val": 100, "n_test": 100},
        "seeds": [0],
        "base_seed": 0,
        "methods": [{"method": "erm"}],
        "corruptions": [{"kind": "identity"}],
        "biased": json.loads(MODEL),
        "main": json.loads(MODEL),
    }
    summary, failures = sc.run_experiment(json.dumps(cfg))
    assert json.loads(failures) == []
    assert len(json.loads(summary)) == 1
    print("smoke test passed")


MODEL = json.dumps({
    "features": {"kind": "bag_of_ngrams", "n": 1, "vocab": 34, "pair_mode": "concat"},
    "hidden": None,
    "opt": {"learning_rate": 0.1, "epochs": 3, "batch_size": 32, "weight_decay": 0.0001, "seed": 0},
})

if __name__ == "__main__":
    main()
