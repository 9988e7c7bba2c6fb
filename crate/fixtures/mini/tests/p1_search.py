CASES = [
    ((-1, [1, 3, 5]), 0),
    ((2, [1, 3, 5]), 1),
    ((3, [1, 3, 5]), 1),
    ((9, [1, 3, 5]), 3),
    ((4, []), 0),
]


def run(namespace):
    search = namespace["search"]
    results = []
    for args, expected in CASES:
        try:
            results.append(search(*args) == expected)
        except Exception:
            results.append(False)
    return results
