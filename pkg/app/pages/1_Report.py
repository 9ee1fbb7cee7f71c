from __future__ import annotations

import json

import pandas as pd
import streamlit as st

from ui.theme import card_close, card_open, ensure_src_on_path, inject_theme_css, run_dir_selector

ensure_src_on_path()

from keystroke_decoder.config import get_settings  # noqa: E402
from keystroke_decoder.domain.keyboard import CLASS_GLYPHS, render  # noqa: E402

st.set_page_config(page_title="Keystroke Decoder — Report", page_icon="📊", layout="wide")
inject_theme_css()

run_dir = run_dir_selector(get_settings().out_dir)


def _csv(name: str) -> pd.DataFrame | None:
    path = run_dir / name
    if not path.exists():
        return None
    return pd.read_csv(path, keep_default_na=False, na_values=[""])


def _json(name: str) -> dict | None:
    path = run_dir / name
    return json.loads(path.read_text(encoding="utf-8")) if path.exists() else None


def _render_classes(classes: str) -> str:
    return render(int(c) for c in str(classes).split())


report = _json("report.json")
if report is None:
    st.warning(f"No report.json in {run_dir}. Run the pipeline up to `evaluate` first.")
    st.stop()

card_open()
st.title("Decoding report")
st.caption(f"config {report['config_hash'][:12]} · seed {report['seed']} · "
           f"beam {report['decode']['beam']} · alpha {report['decode']['alpha']}")
card_close()

metrics = pd.DataFrame(report["metrics"]).set_index("metric")
headline = st.columns(4)
for col, (name, label) in zip(headline, [
    ("cer", "CER (transformer + LM)"), ("cer_nolm", "CER (no LM)"),
    ("cer_dummy", "CER (chance)"), ("her", "Hand error rate"),
]):
    if name in metrics.index and metrics.loc[name, "value"] is not None:
        col.metric(label, f"{metrics.loc[name, 'value']:.3f}")

st.markdown("### Metrics")
st.dataframe(metrics, width="stretch")

tab_sentences, tab_subjects, tab_confusion, tab_time, tab_behaviour = st.tabs(
    ["Sentences", "Subjects", "Confusion", "Time course", "Typing"]
)

with tab_sentences:
    predictions = _csv("predictions.csv")
    nolm = _csv("predictions-nolm.csv")
    if predictions is not None:
        shown = predictions.assign(
            target=predictions["target_classes"].map(_render_classes),
            decoded=predictions["predicted_classes"].map(_render_classes),
        )
        if nolm is not None:
            shown = shown.merge(
                nolm.assign(decoded_nolm=nolm["predicted_classes"].map(_render_classes))[
                    ["subject_id", "sentence_id", "decoded_nolm"]
                ],
                on=["subject_id", "sentence_id"],
            )
        per_sentence = _csv("per_sentence.csv")
        if per_sentence is not None:
            shown = shown.merge(per_sentence[["subject_id", "sentence_id", "cer"]], on=["subject_id", "sentence_id"])
        columns = [c for c in ("subject_id", "sentence_id", "target", "decoded", "decoded_nolm", "cer") if c in shown]
        st.dataframe(shown[columns].sort_values("cer" if "cer" in shown else "sentence_id"), hide_index=True, width="stretch")

with tab_subjects:
    per_subject = _csv("per_subject.csv")
    if per_subject is not None:
        st.bar_chart(per_subject.set_index("subject_id")["cer_mean"])
        st.dataframe(per_subject, hide_index=True, width="stretch")
    scaling = _csv("scaling.csv")
    if scaling is not None:
        st.markdown("#### Training-data scaling")
        st.line_chart(scaling.set_index("n_train_sentences")["cer_mean"])

with tab_confusion:
    confusion = _csv("confusion.csv")
    if confusion is not None:
        confusion.index = list(CLASS_GLYPHS)
        confusion.columns = list(CLASS_GLYPHS)
        st.caption("Rows: target key. Columns: predicted key (position-aligned, no LM).")
        st.dataframe(confusion, width="stretch")
    distance = _csv("confusion_distance.csv")
    if distance is not None and len(distance):
        st.markdown("#### Confusion rate against key distance")
        st.line_chart(distance.set_index("distance")["rate"])
    for name, title in (("cer_by_word_frequency.csv", "CER by word frequency"), ("cer_by_pos.csv", "CER by part of speech"),
                        ("cer_by_typo.csv", "CER on typos vs correct keystrokes")):
        frame = _csv(name)
        if frame is not None:
            st.markdown(f"#### {title}")
            st.dataframe(frame, hide_index=True, width="stretch")

with tab_time:
    for name, title in (("timecourse.csv", "Hand decoding over time"), ("timecourse_class.csv", "Key decoding over time")):
        curve = _csv(name)
        if curve is None:
            continue
        st.markdown(f"#### {title}")
        summary = curve[curve["subject_id"] == -1].set_index("time_s")
        st.line_chart(summary[["accuracy", "chance"]])

with tab_behaviour:
    analysis = _json("analysis.json") or {}
    typing = report.get("typing", {})
    cols = st.columns(3)
    if typing:
        cols[0].metric("Characters / minute", f"{typing['chars_per_minute']:.0f}")
        cols[1].metric("Typo rate", f"{typing['typo_rate']:.3f}")
        cols[2].metric("Sentences with a typo", f"{typing['sentences_with_typo']:.2f}")
    intervals = _csv("interkey_intervals.csv")
    if intervals is not None:
        st.markdown("#### Inter-key intervals (typo vs correct)")
        st.dataframe(intervals, hide_index=True, width="stretch")
    if analysis:
        with st.expander("analysis.json"):
            st.json(analysis)
