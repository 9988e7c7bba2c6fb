def run(stdout):
    lines = stdout.strip().splitlines()
    return [len(lines) == 1, bool(lines) and lines[-1].strip() == "14"]
