"""Test double for the sandbox shim: newline-delimited JSON over stdio.

Only used by the test suite to exercise the executor's live mode.
"""
import ast
import contextlib
import io
import json
import signal
import sys
import time


class _Timeout(BaseException):
    pass


def _on_alarm(signum, frame):
    raise _Timeout()


def _lines(text):
    parts = text.split("\n")
    if parts and parts[-1] == "":
        parts.pop()
    return parts


def _run(req):
    source = req["source_text"]
    try:
        code = compile(source, "<subject>", "exec")
    except SyntaxError as e:
        return {"status": "syntax_error", "stdout_lines": [], "error_text": str(e)}
    if req.get("mode") == "syntax_check":
        return {"status": "ok", "stdout_lines": [], "return_repr": "None"}
    try:
        args = ast.literal_eval(req["input_literal"])
    except Exception as e:  # noqa: BLE001
        return {"status": "exception", "stdout_lines": [], "error_text": "bad input literal: %r" % e}
    if not isinstance(args, tuple):
        args = (args,)
    out = io.StringIO()
    timeout_s = max(int(req.get("timeout_ms", 5000)), 1) / 1000.0
    signal.setitimer(signal.ITIMER_REAL, timeout_s)
    try:
        with contextlib.redirect_stdout(out):
            namespace = {"__name__": "__subject__"}
            exec(code, namespace)
            result = namespace[req["entry_name"]](*args)
        signal.setitimer(signal.ITIMER_REAL, 0)
        return {"status": "ok", "stdout_lines": _lines(out.getvalue()), "return_repr": repr(result)}
    except _Timeout:
        return {"status": "timeout", "stdout_lines": _lines(out.getvalue()), "error_text": "timed out"}
    except BaseException as e:  # noqa: BLE001
        signal.setitimer(signal.ITIMER_REAL, 0)
        return {"status": "exception", "stdout_lines": _lines(out.getvalue()),
                "error_text": "%s: %s" % (type(e).__name__, e)}


def _canonicalize(req):
    try:
        return {"status": "ok", "stdout_lines": [], "return_repr": repr(ast.literal_eval(req["input_literal"]))}
    except Exception as e:  # noqa: BLE001
        return {"status": "exception", "stdout_lines": [], "error_text": str(e)}


def main():
    signal.signal(signal.SIGALRM, _on_alarm)
    real_stdout = sys.stdout
    for raw in sys.stdin:
        if not raw.strip():
            continue
        start = time.monotonic()
        try:
            req = json.loads(raw)
            mode = req.get("mode")
            if mode == "shutdown":
                return 0
            if mode in ("run", "syntax_check"):
                resp = _run(req)
            elif mode == "canonicalize":
                resp = _canonicalize(req)
            else:
                resp = {"status": "exception", "stdout_lines": [], "error_text": "unknown mode %r" % mode}
        except BaseException as e:  # noqa: BLE001
            signal.setitimer(signal.ITIMER_REAL, 0)
            resp = {"status": "exception", "stdout_lines": [], "error_text": "malformed request: %s" % e}
        resp["duration_ms"] = int((time.monotonic() - start) * 1000)
        real_stdout.write(json.dumps(resp) + "\n")
        real_stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
