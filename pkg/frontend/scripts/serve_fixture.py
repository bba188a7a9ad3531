"""Build a small artifact directory and serve the HTTP API on a free port.

Used by the frontend integration tests: prints one "SERVER {json}" line with
the chosen port and artifact root, then blocks serving requests.
"""
import contextlib
import io
import json
import socket
import sys
import tempfile
from pathlib import Path


def main() -> int:
    from craniokit import cli
    from craniokit.service import create_app
    import uvicorn

    root = Path(tempfile.mkdtemp(prefix="planner-ui-fixture-"))
    steps = [
        ["synth", "--out", str(root), "--counts", "8", "5", "5", "4",
         "--subdivisions", "2", "--seed", "7"],
        ["split", "--out", str(root), "--ratios", "0.6", "0.2", "0.2",
         "--seed", "7"],
        ["augment", "--out", str(root), "--target", "6",
         "--basis-k", "12", "--components", "12", "--seed", "7"],
        ["train", "--out", str(root), "--epochs", "3", "--batch-size", "4",
         "--levels", "2", "--spiral-length", "6", "--seed", "7", "--quiet"],
        ["eval", "--out", str(root), "--diversity-n", "4", "--seed", "7"],
        ["analyze", "--out", str(root)],
    ]
    for argv in steps:
        # keep step summaries off stdout so the SERVER line stays parseable
        with contextlib.redirect_stdout(io.StringIO()):
            rc = cli.main(argv)
        if rc != 0:
            print(f"SERVER-ERROR step failed: {argv}", flush=True)
            return 1

    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()

    print("SERVER " + json.dumps({"port": port, "root": str(root)}), flush=True)
    uvicorn.run(create_app(root), host="127.0.0.1", port=port,
                log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
