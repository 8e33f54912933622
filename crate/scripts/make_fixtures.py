"""Regenerate the reference fixtures used by the Rust test suites.

Everything here runs offline. The tiny GPT-2 checkpoint is randomly
initialised with a fixed seed and evaluated with the Hugging Face
`transformers` GPT-2 implementation, which serves as the independent
reference for forward-pass, steering and perplexity parity.

    python3 scripts/make_fixtures.py

Outputs land in crates/core/tests/fixtures/.
"""

import json
import math
import os
import re

import numpy as np
import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "crates", "core", "tests", "fixtures")
ASSETS = os.path.join(ROOT, "crates", "core", "assets", "gpt2")
TINY = os.path.join(FIXTURES, "tiny_gpt2")


def tiny_tokenizer():
    """Byte-level BPE with 512 entries: 256 byte symbols, the first usable GPT-2 merges, end-of-text."""
    full = json.load(open(os.path.join(ASSETS, "vocab.json"), encoding="utf-8"))
    by_id = sorted(full.items(), key=lambda kv: kv[1])
    vocab = {}
    for tok, idx in by_id[:256]:
        vocab[tok] = len(vocab)
    merges = []
    for line in open(os.path.join(ASSETS, "merges.txt"), encoding="utf-8"):
        line = line.rstrip("\n")
        if not line or line.startswith("#version"):
            continue
        a, b = line.split(" ")
        if a in vocab and b in vocab and a + b not in vocab:
            vocab[a + b] = len(vocab)
            merges.append(line)
        if len(vocab) == 511:
            break
    vocab["<|endoftext|>"] = 511
    with open(os.path.join(TINY, "vocab.json"), "w", encoding="utf-8") as f:
        json.dump(vocab, f, ensure_ascii=False)
    with open(os.path.join(TINY, "merges.txt"), "w", encoding="utf-8") as f:
        f.write("#version: 0.2\n" + "\n".join(merges) + "\n")


def tiny_model():
    torch.manual_seed(1234)
    cfg = GPT2Config(
        vocab_size=512,
        n_positions=512,
        n_embd=48,
        n_layer=4,
        bos_token_id=511,
        eos_token_id=511,
        n_head=4,
        activation_function="gelu_new",
        resid_pdrop=0.0,
        embd_pdrop=0.0,
        attn_pdrop=0.0,
    )
    model = GPT2LMHeadModel(cfg).eval()
    with torch.no_grad():
        for name, p in model.transformer.named_parameters():
            if "ln" in name and name.endswith("weight"):
                p.copy_(1.0 + 0.1 * torch.randn_like(p))
            else:
                p.copy_(0.15 * torch.randn_like(p))
    return model


def resid_hooks(model, store, direction=None, strength=0.0):
    handles = []
    for idx, block in enumerate(model.transformer.h):

        def hook(_mod, _inp, out, idx=idx):
            hidden = out[0] if isinstance(out, tuple) else out
            if direction is not None:
                norm = hidden.norm(dim=-1, keepdim=True)
                hidden = hidden + strength * norm * direction
            store[idx] = hidden.detach().clone()
            if isinstance(out, tuple):
                return (hidden,) + tuple(out[1:])
            return hidden

        handles.append(block.register_forward_hook(hook))
    return handles


def run(model, ids, direction=None, strength=0.0):
    store = {}
    handles = resid_hooks(model, store, direction, strength)
    with torch.no_grad():
        logits = model(torch.tensor([ids])).logits[0]
    for h in handles:
        h.remove()
    return logits, store


def greedy(model, ids, steps, direction=None, strength=0.0):
    ids = list(ids)
    out = []
    for _ in range(steps):
        logits, _ = run(model, ids, direction, strength)
        nxt = int(torch.argmax(logits[-1]))
        out.append(nxt)
        ids.append(nxt)
    return out


def perplexity(logits, ids):
    logp = torch.log_softmax(logits.double(), dim=-1)
    nll = [-float(logp[i, ids[i + 1]]) for i in range(len(ids) - 1)]
    return math.exp(sum(nll) / len(nll))


def flat(t):
    return [float(x) for x in t.reshape(-1).tolist()]


def tiny_fixtures():
    model = tiny_model()
    tensors = {
        k: v.detach().contiguous().clone()
        for k, v in model.transformer.state_dict().items()
        if not re.fullmatch(r"h\.\d+\.attn\.(bias|masked_bias)", k)
    }
    save_file(tensors, os.path.join(TINY, "model.safetensors"))
    model.config.to_json_file(os.path.join(TINY, "config.json"))

    rng = np.random.default_rng(7)
    prompts = [[int(x) for x in rng.integers(0, 512, size=8)] for _ in range(5)]
    direction = torch.tensor(rng.normal(size=48), dtype=torch.float32)
    direction = direction / direction.norm()
    strength = 0.25

    golden = {
        "config": {"vocab_size": 512, "n_positions": 512, "n_embd": 48, "n_layer": 4, "n_head": 4},
        "prompts": [],
        "steering": {"direction": flat(direction), "strength": strength},
    }
    for ids in prompts:
        logits, store = run(model, ids)
        golden["prompts"].append(
            {
                "tokens": ids,
                "logits": flat(logits),
                "resid_post": [flat(store[l]) for l in range(4)],
                "perplexity": perplexity(logits, ids),
                "greedy": greedy(model, ids, 12),
            }
        )
    s_logits, s_store = run(model, prompts[0], direction, strength)
    golden["steering"]["logits"] = flat(s_logits)
    golden["steering"]["resid_post"] = [flat(s_store[l]) for l in range(4)]
    golden["steering"]["greedy"] = greedy(model, prompts[0], 12, direction, strength)
    golden["steering"]["greedy_negative"] = greedy(model, prompts[0], 12, -direction, strength)
    with open(os.path.join(FIXTURES, "tiny_golden.json"), "w") as f:
        json.dump(golden, f)


def tokenizer_fixtures():
    tok = GPT2Tokenizer(os.path.join(ASSETS, "vocab.json"), os.path.join(ASSETS, "merges.txt"))
    tiny = GPT2Tokenizer(os.path.join(TINY, "vocab.json"), os.path.join(TINY, "merges.txt"))
    samples = [
        "Hello world",
        "",
        " ",
        "I'm here  now\n\n  ok",
        "They'll say we've done it, didn't they?",
        "The year 2024 had 366 days; 3.14159 is pi.",
        "café naïve résumé",
        "Emoji \U0001f642\U0001f680 and CJK 日本語 中文",
        "Tabs\tand\r\nnewlines   \n",
        "contentment contentment contentment",
        "She slammed the door so hard the windows rattled.",
        "   leading and trailing spaces   ",
        "ALLCAPS words AND MiXeD CaSe",
        "<|endoftext|> is not special here",
        "Punctuation!!! ...?? --- ;;; (brackets) [x] {y}",
    ]
    out = [{"text": s, "ids": tok.encode(s), "tiny_ids": tiny.encode(s)} for s in samples]
    with open(os.path.join(FIXTURES, "tokenizer_golden.json"), "w") as f:
        json.dump(out, f, ensure_ascii=False, indent=1)


def anisotropy_fixture():
    """20 unit vectors whose pairwise cosines have mean 0.808 and population std 0.047."""
    rng = np.random.default_rng(11)
    dim, n = 32, 20
    best = None
    target_mean, target_std = 0.808, 0.047
    for trial in range(400):
        common = rng.normal(size=dim)
        common /= np.linalg.norm(common)
        spread = rng.uniform(0.2, 1.2, size=n)
        noise = rng.normal(size=(n, dim)) * spread[:, None] * rng.uniform(0.3, 0.8)
        vecs = common[None, :] * 1.0 + noise
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        g = vecs @ vecs.T
        cos = g[np.triu_indices(n, 1)]
        err = abs(cos.mean() - target_mean) + abs(cos.std() - target_std)
        if best is None or err < best[0]:
            best = (err, vecs)
    vecs = best[1]
    # Refine by gradient descent on (mean, std) of the Gram off-diagonal.
    x = torch.tensor(vecs, dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([x], lr=1e-3)
    iu = torch.triu_indices(n, n, 1)
    for _ in range(4000):
        u = x / x.norm(dim=1, keepdim=True)
        g = u @ u.T
        cos = g[iu[0], iu[1]]
        loss = (cos.mean() - target_mean) ** 2 + (cos.std(unbiased=False) - target_std) ** 2
        opt.zero_grad()
        loss.backward()
        opt.step()
    u = (x / x.norm(dim=1, keepdim=True)).detach().numpy()
    cos = (u @ u.T)[np.triu_indices(n, 1)]
    print("anisotropy fixture mean=%.6f std=%.6f" % (cos.mean(), cos.std()))
    with open(os.path.join(FIXTURES, "anisotropy_states.json"), "w") as f:
        json.dump({"states": u.tolist()}, f)


if __name__ == "__main__":
    os.makedirs(TINY, exist_ok=True)
    tiny_tokenizer()
    tiny_fixtures()
    tokenizer_fixtures()
    anisotropy_fixture()
