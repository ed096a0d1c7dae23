"""Textual explanations: prompt, completion, record/replay, lint.

Renders the explanation prompt for a worked pair, obtains a completion
from a local stub endpoint (so the demo runs offline), records the raw
response as a fixture, replays it byte-identically, and runs the
consistency lint against the table.

Point LLM_DEMO_BASE_URL at a real OpenAI-compatible server to see live
completions instead of the stub.
"""
import json
import os
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np

import facexplain as fx
from facexplain.llm_report import EndpointConfig, FixtureStore, build_report, generate_text
from facexplain.synthetic import SyntheticRegionEmbedder, make_strip_set, paint_regions, strip_landmarks

OUT = Path(__file__).parent / "output" / "05_llm_report"
OUT.mkdir(parents=True, exist_ok=True)


class CannedExplainer(BaseHTTPRequestHandler):
    """Stands in for a chat-completions server; answers with a fixed style."""

    def do_POST(self):
        json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        text = ("The two faces are mostly alike. The right side of the nose is similar, "
                "while the left eye is dissimilar, which lowers the overall score.")
        body = json.dumps({"choices": [{"message": {"content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


s = 6
sset = make_strip_set(s)
masks = fx.build_masks(strip_landmarks(s, 48, 48, "demo"), sset)
embedder = SyntheticRegionEmbedder(masks, np.linspace(2.0, 0.4, s), dim=8, seed=9)
names = ("Left eye", "Right eye", "Left side of the nose",
         "Right side of the nose", "Upper lip", "Chin")
rng = np.random.default_rng(1)
base = rng.uniform(100, 220, size=s)
altered = base.copy()
altered[0] -= 90.0
image_a = paint_regions(masks, base)
image_b = paint_regions(masks, altered)
expl = fx.single_removal_s0(embedder, image_a, image_b, masks, masks, None,
                            fx.FillStrategy.gray(), region_names=names)
prompt = fx.render_prompt(fx.DEFAULT_TEMPLATE, expl)
print("prompt:\n" + prompt + "\n")

base_url = os.environ.get("LLM_DEMO_BASE_URL")
server = None
if not base_url:
    server = HTTPServer(("127.0.0.1", 0), CannedExplainer)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base_url = f"http://127.0.0.1:{server.server_port}/v1"
    print("no LLM_DEMO_BASE_URL set; using a local canned endpoint")

config = EndpointConfig(base_url=base_url, model=os.environ.get("LLM_DEMO_MODEL", "canned"))
fixtures = FixtureStore(OUT / "fixtures")
text = generate_text(prompt, config, fixtures=fixtures, record=True)
replayed = generate_text(prompt, config, offline=True, fixtures=fixtures)
print("completion:\n" + text)
print("\nreplay byte-identical:", replayed == text)

warnings = fx.lint_explanation(text, expl)
for w in warnings:
    print(f"lint [{w.kind}] {w.message}")
if not warnings:
    print("lint: no inconsistencies found")

report = build_report(expl, prompt=prompt, generated_at="demo", llm_text=text,
                      llm_model=config.model)
(OUT / "report.md").write_text(report.to_markdown())
(OUT / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
if server:
    server.shutdown()
print(f"artifacts in {OUT}")
