from __future__ import annotations

import sys
from pathlib import Path

import streamlit as st

ROOT = Path(__file__).resolve().parents[2]
SRC = ROOT / "src"


def ensure_src_on_path() -> None:
    if str(SRC) not in sys.path:
        sys.path.insert(0, str(SRC))


def inject_theme_css() -> None:
    st.markdown(
        """
        <style>
          .block-container { padding-top: 1.1rem; padding-bottom: 2rem; max-width: 1200px; }
          [data-testid="stSidebar"] .block-container { padding-top: 0.9rem; }

          h1,h2,h3 { letter-spacing: -0.2px; }

          .kd-card{
            border: 1px solid rgba(255,255,255,0.08);
            background: rgba(255,255,255,0.03);
            border-radius: 16px;
            padding: 16px 16px;
            box-shadow: 0 14px 30px rgba(0,0,0,0.35);
          }
          .kd-dot { display:inline-block; width:9px; height:9px; border-radius:50%; margin-right:6px; }
          .kd-dot--done { background: #2ecc71; }
          .kd-dot--stale { background: #f39c12; }
          .kd-dot--missing { background: #7f8c8d; }

          div.stButton > button{
            border-radius: 12px !important;
            border: 1px solid rgba(255,255,255,0.10) !important;
          }
          [data-testid="stAlert"]{ border-radius: 14px !important; }
          hr { border-color: rgba(255,255,255,0.08); }
        </style>
        """,
        unsafe_allow_html=True,
    )


def card_open() -> None:
    st.markdown('<div class="kd-card">', unsafe_allow_html=True)


def card_close() -> None:
    st.markdown("</div>", unsafe_allow_html=True)


def run_dir_selector(default: str) -> Path:
    """Sidebar text box for the run directory, shared across pages through session state."""
    st.session_state.setdefault("run_dir", default)
    value = st.sidebar.text_input("Run directory", key="run_dir")
    return Path(value)
