import json
import pathlib
import sys

import jsonschema


def main():
    schema = json.loads(pathlib.Path(sys.argv[1]).read_text())
    configs = pathlib.Path(sys.argv[2])
    runs = pathlib.Path(sys.argv[3])
    jsonschema.Draft7Validator.check_schema(schema)
    v = jsonschema.Draft7Validator(schema)
    bad = 0
    for p in sorted(configs.glob("*.json")):
        errs = list(v.iter_errors(json.loads(p.read_text())))
        if p.name == "invalid.json":
            if not errs:
                print(f"FAIL {p.name}: expected schema errors")
                bad += 1
            continue
        for e in errs:
            print(f"FAIL {p.name}: {e.json_path}: {e.message}")
            bad += 1
    reports = sorted(runs.glob("*/report.json"))
    if not reports:
        print("FAIL no reports found under", runs)
        bad += 1
    for r in reports:
        echo = json.loads(r.read_text())["config"]
        for e in v.iter_errors(echo):
            print(f"FAIL {r}: {e.json_path}: {e.message}")
            bad += 1
    print(f"checked {len(reports)} reports, {bad} problems")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
