from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import streamlit as st

from ui.theme import card_close, card_open, ensure_src_on_path, inject_theme_css, run_dir_selector

ensure_src_on_path()

from keystroke_decoder.config import config_hash, get_settings, load_config  # noqa: E402
from keystroke_decoder.domain.errors import KeystrokeDecoderError  # noqa: E402
from keystroke_decoder.services.storage_service import STAGE_ORDER, manifest_key  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = sorted((ROOT / "configs").glob("*.json"))


def _stage_table(run_dir: Path, current_hash: str) -> pd.DataFrame:
    rows = []
    for stage in STAGE_ORDER:
        path = run_dir / manifest_key(stage)
        if not path.exists():
            rows.append({"stage": stage, "status": "missing", "wall_time_s": None, "config": ""})
            continue
        manifest = json.loads(path.read_text(encoding="utf-8"))
        stale = manifest.get("config_hash") != current_hash
        rows.append({
            "stage": stage,
            "status": "stale" if stale else "done",
            "wall_time_s": manifest.get("wall_time_s"),
            "config": str(manifest.get("config_hash", ""))[:12],
        })
    return pd.DataFrame(rows)


def _status_html(table: pd.DataFrame) -> str:
    return "".join(
        f'<span class="kd-dot kd-dot--{row.status}"></span>{row.stage}&nbsp;&nbsp;'
        for row in table.itertuples(index=False)
    )


st.set_page_config(page_title="Keystroke Decoder", page_icon="⌨️", layout="wide")
inject_theme_css()

run_dir = run_dir_selector(get_settings().out_dir)
config_choice = st.sidebar.selectbox(
    "Compare against config", options=["(defaults)"] + [str(p.relative_to(ROOT)) for p in CONFIGS],
)

card_open()
st.title("Keystroke Decoder")
st.caption("Decode typed sentences from simulated EEG/MEG recorded during typing.")
card_close()

try:
    cfg = load_config(None if config_choice == "(defaults)" else ROOT / config_choice)
except KeystrokeDecoderError as exc:
    st.error(str(exc))
    st.stop()

table = _stage_table(run_dir, config_hash(cfg))

st.markdown("### Pipeline status")
st.markdown(_status_html(table), unsafe_allow_html=True)
st.dataframe(table, hide_index=True, width="stretch")
if (table["status"] == "stale").any():
    st.warning("Some stages ran with a different config than the one selected in the sidebar.")

st.markdown("### Running the pipeline")
st.code(f"python -m keystroke_decoder run-all --config {config_choice if config_choice != '(defaults)' else 'configs/desk.json'} --out {run_dir}", language="bash")
st.info("Open **Report** in the sidebar once `evaluate` and `analyze` have run.")
