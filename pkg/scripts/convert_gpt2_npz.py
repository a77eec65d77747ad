"""Convert a public GPT-2 weight dump (.npz) into the tensor checkpoint format.

Works offline on a dump you already have, e.g. one produced from the
published TensorFlow checkpoint:

    import numpy as np, tensorflow as tf                      # elsewhere
    reader = tf.train.load_checkpoint("gpt2/124M/model.ckpt")
    np.savez("gpt2.npz", **{name: reader.get_tensor(name)
                            for name in reader.get_variable_to_shape_map()})

Then here:

    python3 scripts/convert_gpt2_npz.py gpt2.npz gpt2_backbone.ckpt

The output loads with tsalign.backbone.load_checkpoint, which keeps the
first 6 of the 12 blocks. Weight layout notes:
  - wte [V, D] -> vocab_table, wpe [T, D] -> positional_table
  - c_attn/c_fc/c_proj kernels are stored [1, in, out] in the TF dump; the
    leading singleton is squeezed, no transpose needed (inputs are
    row-vectors here exactly as in the original conv1d convention)
  - layer-norm g/b -> gain/bias
  - meta.n_heads = 12 rides along as a 0-d tensor

Only numpy required. The hash tokenizer indexes rows of vocab_table directly,
so converted weights give real GPT-2 geometry but not GPT-2's BPE token
mapping; see the README for what that does and does not buy you.
"""

import argparse
import re
import sys

import numpy as np

sys.path.insert(0, str(__import__("pathlib").Path(__file__).resolve().parents[1] / "src"))

from tsalign.checkpoint import save_checkpoint  # noqa: E402

# suffix of the source name (slashes or dots, optional model/ prefix) -> our name
_PLAIN = {
    "wte": "vocab_table",
    "wpe": "positional_table",
    "ln_f/g": "ln_f.gain",
    "ln_f/b": "ln_f.bias",
}

_BLOCK = {
    "ln_1/g": "ln1.gain",
    "ln_1/b": "ln1.bias",
    "attn/c_attn/w": "attn.w_qkv",
    "attn/c_attn/b": "attn.b_qkv",
    "attn/c_proj/w": "attn.w_out",
    "attn/c_proj/b": "attn.b_out",
    "ln_2/g": "ln2.gain",
    "ln_2/b": "ln2.bias",
    "mlp/c_fc/w": "ff.w1",
    "mlp/c_fc/b": "ff.b1",
    "mlp/c_proj/w": "ff.w2",
    "mlp/c_proj/b": "ff.b2",
}


def canonical(name: str) -> str:
    name = name.replace(".", "/")
    if name.startswith("model/"):
        name = name[len("model/") :]
    return name


def convert(npz_path: str, out_path: str, n_heads: int = 12) -> dict:
    dump = np.load(npz_path)
    tensors = {}
    for raw_name in dump.files:
        name = canonical(raw_name)
        value = np.squeeze(np.asarray(dump[raw_name], dtype=np.float64))
        if name in _PLAIN:
            tensors[_PLAIN[name]] = value
            continue
        m = re.match(r"h(\d+)/(.+)$", name)
        if m and m.group(2) in _BLOCK:
            tensors[f"block{int(m.group(1))}.{_BLOCK[m.group(2)]}"] = value
        # anything else (adam moments, global step) is silently skipped

    required = ["vocab_table", "positional_table", "ln_f.gain", "ln_f.bias"]
    required += [f"block{i}.{suffix}" for i in range(6) for suffix in _BLOCK.values()]
    missing = [name for name in required if name not in tensors]
    if missing:
        raise SystemExit(f"dump is missing {len(missing)} tensors, first: {missing[:4]}")

    tensors["meta.n_heads"] = np.float64(n_heads)
    save_checkpoint(out_path, tensors)
    return tensors


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("npz", help="GPT-2 weight dump (.npz)")
    parser.add_argument("out", help="output checkpoint path")
    parser.add_argument("--heads", type=int, default=12,
                        help="attention heads of the source model (12 for base GPT-2)")
    args = parser.parse_args()
    tensors = convert(args.npz, args.out, args.heads)
    V, D = tensors["vocab_table"].shape
    blocks = len({k.split(".")[0] for k in tensors if k.startswith("block")})
    print(f"wrote {args.out}: V={V}, D={D}, {blocks} blocks (loader keeps the first 6)")


if __name__ == "__main__":
    main()
