import subprocess as sp
import sys

# Formatting and import order
sp.run(["black", "vlmseg", "tests", "--check"])
sp.run(["isort", "vlmseg", "tests", "--profile", "black", "--check-only"])

# Typing
sp.run(["pyright", "vlmseg"])

# Unit tests; `python tools/test.py slow` also runs the desk-scale ablations
markers = "slow or not slow" if "slow" in sys.argv[1:] else "not slow"
sp.run(["pytest", "-m", markers, "--cov", "vlmseg", "--cov-report", "xml", "tests"])
