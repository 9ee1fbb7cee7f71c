from __future__ import annotations

import streamlit as st

from ui.theme import card_close, card_open, inject_theme_css

st.set_page_config(page_title="Keystroke Decoder — How it Works", page_icon="🧠", layout="wide")
inject_theme_css()

card_open()
st.title("How it Works")
st.caption("From brain signals recorded while typing to decoded sentences.")
card_close()

st.markdown("")

card_open()
st.markdown("### Overview")
st.markdown(
    """
Subjects read a short sentence, memorize it, then type it on a QWERTY keyboard.
Each keystroke is time-locked to the neural recording, and a network predicts which of
**29 key classes** (26 letters, space, number, special) was intended.

Recordings here are **simulated**: every keypress evokes a short motor response whose
topography depends on the hand, the key position and the subject.
"""
)

st.markdown("---")

st.markdown("### Stages")
st.markdown(
    """
1. **generate**: sentences, typing behaviour (with typos), and continuous recordings.
2. **split**: similar sentences are clustered on TF-IDF similarity so no cluster spans train, valid and test.
3. **preprocess**: keystrokes are aligned to the read sentence, then band-pass 0.1–20 Hz,
   downsample to 50 Hz, cut windows around each keystroke, baseline-correct and scale.
4. **train-lm**: a character n-gram language model with absolute-discounting back-off.
5. **train**: a convolutional module embeds each window; a transformer sees the whole sentence.
6. **decode**: beam search fuses network log-probabilities with the language model.
7. **evaluate**: character error rate, hand error rate, confusion, paired tests against the no-LM and chance decoders.
8. **analyze**: confusion vs key distance, word frequency, embedding clusters, time-resolved decoding, inter-key intervals.
"""
)

st.markdown("---")

st.markdown("### Reading the numbers")
st.markdown(
    """
- **CER** is the edit distance between decoded and intended keys divided by the sentence length.
- **HER** counts letter predictions that land on the wrong hand.
- Permutation p-values are FDR-corrected within each family of tests.
"""
)
card_close()
