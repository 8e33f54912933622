"""Reference logits for GPT-2 124M, used by the acceptance suite.

Usage: python scripts/make_gpt2_golden.py <gpt2-dir>

<gpt2-dir> is a local copy of the Hugging Face `gpt2` repository
(model.safetensors, config.json, vocab.json, merges.txt). The script writes
golden_prompts.json and golden_logits.safetensors into that directory; point
EMOSTEER_GPT2_DIR at it before running the acceptance suite.
"""
import json
import os
import sys

import torch
from safetensors.torch import save_file
from transformers import GPT2LMHeadModel, GPT2TokenizerFast

PROMPTS = [
    "The quick brown fox jumps over the lazy dog.",
    "In a hole in the ground there lived a",
    "I can't believe you did that to me,",
    "Water boils at one hundred degrees Celsius",
    "She opened the letter and started to cry because",
]


def main(directory):
    tok = GPT2TokenizerFast.from_pretrained(directory)
    model = GPT2LMHeadModel.from_pretrained(directory, torch_dtype=torch.float32).eval()
    prompts, tensors = [], {}
    for i, text in enumerate(PROMPTS):
        ids = tok.encode(text)
        with torch.no_grad():
            logits = model(torch.tensor([ids])).logits[0]
        tensors[f"prompt{i}"] = logits.contiguous()
        prompts.append({"text": text, "tokens": ids})
    save_file(tensors, os.path.join(directory, "golden_logits.safetensors"))
    with open(os.path.join(directory, "golden_prompts.json"), "w") as f:
        json.dump({"prompts": prompts}, f, indent=2)


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    main(sys.argv[1])
