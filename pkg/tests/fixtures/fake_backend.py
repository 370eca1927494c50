"""
Stand-in inference runtime for the process adapter tests.

Speaks the newline-delimited JSON protocol on stdin/stdout. A frame whose
first pixel is brighter than 100 yields one flame detection; every window
is classified as fire.
"""

import argparse
import base64
import json
import os
import sys
import time


def handle(request):
    if request.get("op") == "detect":
        first_pixel = base64.b64decode(request["pixels"])[0]
        detections = []
        if first_pixel > 100:
            detections.append({"class": "flame", "conf": 0.8, "box": [1, 1, 4, 4], "frame": 999})
        return {"v": 1, "ok": True, "detections": detections}
    if request.get("op") == "classify":
        shapes = {tuple(f["shape"]) for f in request["frames"]}
        if len(shapes) != 1:
            return {"v": 1, "ok": False, "error": "frames of one window must share a shape"}
        return {"v": 1, "ok": True, "dist": {"fire": 0.7, "normal": 0.3}}
    return {"v": 1, "ok": False, "error": f"unknown op {request.get('op')!r}"}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--crash-marker", help="Exit on the first request unless this file exists.")
    parser.add_argument("--always-crash", action="store_true")
    parser.add_argument("--hang", action="store_true")
    parser.add_argument("--fail", action="store_true")
    args = parser.parse_args()

    for line in sys.stdin:
        request = json.loads(line)
        if args.always_crash:
            sys.exit(3)
        if args.crash_marker and not os.path.exists(args.crash_marker):
            open(args.crash_marker, "w").close()
            sys.exit(3)
        if args.hang:
            time.sleep(60)
        if args.fail:
            response = {"v": 1, "ok": False, "error": "model not loaded"}
        else:
            response = handle(request)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
