import subprocess as sp

# Format the package and its tests with black and isort
for target in ("vlmseg", "tests", "tools"):
    sp.run(["black", target])
    sp.run(["isort", target, "--profile", "black"])
