"""
Command line
============

The same computations are available from the shell as ``diqkd <command>``.
Here they are driven in-process.
"""
# %%
import json
import os
import tempfile

from diqkd.cli import run_command

run_command(["critical", "--lambda", "0.5", "1"])
run_command(["keyrate", "--s", "2.6", "--qber", "0.03"])
run_command(["region", "--s", "2.5", "--lambdas", "0", "0.25", "0.5", "0.75", "1"])

# %%
# The simulation summary carries both keys in hex; keep them in a file.
path = os.path.join(tempfile.mkdtemp(), "run.json")
run_command(["simulate", "--n", "50000", "--s-tol", "2.7", "--format", "json", "--output", path])
with open(path) as fh:
    result = json.load(fh)["result"]
print({k: result[k] for k in ("s_hat", "raw_key_length", "final_key_length", "empirical_rate", "predicted_rate")})
