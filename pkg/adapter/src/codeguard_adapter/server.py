"""Stdio JSON server exposing a pretrained transformer to the toolkit.

One request per line on stdin, one response per line on stdout:

    {"op":"hello"}                        -> {"name":..., "d":..., "H":..., "layer":"last"}
    {"op":"attend","id":N,"text":...}     -> {"id":N,"tokens":[...],"offsets":[[s,e],...],
                                              "heads":[[[...]]],"embeddings":[[...]],
                                              "truncated":false}
    {"op":"ppl","id":N,"text":...}        -> {"id":N,"ppl":...}   (optional "paired")
    {"op":"generate","id":N,"input":...}  -> {"id":N,"output":...}

Failures come back as {"id":N,"error":msg,"code":code} with stable codes
MODEL_LOAD, TOKENIZE, OOM, TRUNCATED_INPUT, UNSUPPORTED, INTERNAL.

Attention is the last encoder layer, per head, rows softmax-normalized by
the model itself; head averaging stays on the client side.  Embeddings are
the last hidden state.  Tokenizer space/continuation markers are stripped
so offsets are plain scalar indices into the original text.
"""

from __future__ import annotations

import argparse
import json
import sys

MAX_TOKENS = 512
GENERATE_SLOTS = 8

# continuation/space markers used by WordPiece, BPE and SentencePiece
_MARKERS = ("##", "Ġ", "▁")


class AdapterError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _clean_token(token: str) -> str:
    if token.startswith("##"):
        return token[2:]
    return token.lstrip("Ġ▁")


class Session:
    """Loaded model plus the three protocol operations."""

    def __init__(self, model_dir: str, device: str = "cpu"):
        import torch
        from transformers import AutoConfig, AutoModel, AutoModelForMaskedLM, AutoTokenizer

        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_dir)
            config = AutoConfig.from_pretrained(model_dir)
            # eager attention: fused kernels cannot return attention weights
            kwargs = {"attn_implementation": "eager"}
            if getattr(config, "is_encoder_decoder", False):
                from transformers import AutoModelForSeq2SeqLM
                self.model = AutoModelForSeq2SeqLM.from_pretrained(model_dir, **kwargs)
                self.mlm = None
            else:
                try:
                    self.model = AutoModelForMaskedLM.from_pretrained(model_dir, **kwargs)
                    self.mlm = self.model
                except Exception:
                    self.model = AutoModel.from_pretrained(model_dir, **kwargs)
                    self.mlm = None
        except Exception as exc:
            raise AdapterError("MODEL_LOAD", f"cannot load {model_dir!r}: {exc}") from exc
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.config = self.model.config
        self.is_seq2seq = getattr(self.config, "is_encoder_decoder", False)
        self.name = getattr(self.config, "name_or_path", model_dir) or model_dir

    @property
    def hidden_size(self) -> int:
        return self.config.hidden_size if not self.is_seq2seq else self.config.d_model

    @property
    def num_heads(self) -> int:
        return self.config.num_attention_heads

    def hello(self) -> dict:
        return {"name": self.name, "d": int(self.hidden_size),
                "H": int(self.num_heads), "layer": "last"}

    def _encode(self, text: str):
        if not isinstance(text, str) or not text.strip():
            raise AdapterError("TOKENIZE", "empty or non-string text")
        enc = self.tokenizer(text, add_special_tokens=False,
                             return_offsets_mapping=True)
        if not enc["input_ids"]:
            raise AdapterError("TOKENIZE", f"no tokens in {text!r}")
        return enc

    def _encoder_forward(self, ids):
        torch = self._torch
        batch = torch.tensor([ids], device=self.device)
        target = self.model.get_encoder() if self.is_seq2seq else self.model
        with torch.no_grad():
            out = target(input_ids=batch, output_attentions=True,
                         output_hidden_states=True)
        return out

    def attend(self, text: str) -> dict:
        enc = self._encode(text)
        ids = enc["input_ids"]
        offsets = enc["offset_mapping"]
        truncated = len(ids) > MAX_TOKENS
        if truncated:
            ids, offsets = ids[:MAX_TOKENS], offsets[:MAX_TOKENS]
        out = self._encoder_forward(ids)
        heads = out.attentions[-1][0]
        embeddings = out.hidden_states[-1][0]
        tokens = [_clean_token(t) for t in self.tokenizer.convert_ids_to_tokens(ids)]
        return {
            "tokens": tokens,
            "offsets": [[int(s), int(e)] for s, e in offsets],
            "heads": heads.tolist(),
            "embeddings": embeddings.tolist(),
            "truncated": truncated,
        }

    def ppl(self, text: str, paired: str | None = None) -> dict:
        if self.mlm is None:
            raise AdapterError("UNSUPPORTED", "model has no masked-LM head")
        if self.tokenizer.mask_token_id is None:
            raise AdapterError("UNSUPPORTED", "tokenizer has no mask token")
        torch = self._torch
        sequence = text if paired is None else f"{text} {paired}"
        ids = self._encode(sequence)["input_ids"]
        if len(ids) > MAX_TOKENS:
            raise AdapterError("TRUNCATED_INPUT",
                               f"{len(ids)} tokens exceed the {MAX_TOKENS} limit")
        n = len(ids)
        base = torch.tensor(ids, device=self.device)
        batch = base.repeat(n, 1)
        positions = torch.arange(n, device=self.device)
        batch[positions, positions] = self.tokenizer.mask_token_id
        with torch.no_grad():
            logits = self.mlm(input_ids=batch).logits
        log_probs = torch.log_softmax(logits[positions, positions], dim=-1)
        token_ll = log_probs[positions, base]
        return {"ppl": float(torch.exp(-token_ll.mean()))}

    def generate(self, text: str) -> dict:
        torch = self._torch
        ids = self._encode(text)["input_ids"]
        if len(ids) > MAX_TOKENS - GENERATE_SLOTS:
            raise AdapterError("TRUNCATED_INPUT",
                               f"{len(ids)} tokens exceed the generation limit")
        if self.is_seq2seq:
            batch = torch.tensor([ids], device=self.device)
            with torch.no_grad():
                out = self.model.generate(batch, max_new_tokens=32, do_sample=False)
            return {"output": self.tokenizer.decode(out[0], skip_special_tokens=True)}
        if self.mlm is None:
            raise AdapterError("UNSUPPORTED", "model cannot generate")
        # encoder-only continuation: append mask slots, fill with the argmax
        mask = self.tokenizer.mask_token_id
        batch = torch.tensor([ids + [mask] * GENERATE_SLOTS], device=self.device)
        with torch.no_grad():
            logits = self.mlm(input_ids=batch).logits[0]
        filled = logits[len(ids):].argmax(dim=-1)
        return {"output": self.tokenizer.decode(filled, skip_special_tokens=True)}


def _handle(session_or_error, request: dict) -> dict:
    op = request.get("op")
    response: dict = {}
    if "id" in request:
        response["id"] = request["id"]
    try:
        if isinstance(session_or_error, AdapterError):
            raise session_or_error
        session = session_or_error
        if op == "hello":
            response.update(session.hello())
        elif op == "attend":
            response.update(session.attend(request.get("text")))
        elif op == "ppl":
            response.update(session.ppl(request.get("text"), request.get("paired")))
        elif op == "generate":
            response.update(session.generate(request.get("input")))
        else:
            raise AdapterError("UNSUPPORTED", f"unknown op {op!r}")
    except AdapterError as exc:
        response.update({"error": str(exc), "code": exc.code})
    except RuntimeError as exc:
        code = "OOM" if "out of memory" in str(exc).lower() else "INTERNAL"
        response.update({"error": str(exc), "code": code})
    except Exception as exc:
        response.update({"error": f"{type(exc).__name__}: {exc}", "code": "INTERNAL"})
    return response


def serve(model_dir: str, device: str = "cpu",
          stdin=None, stdout=None) -> None:
    """Blocking request loop; returns on stdin EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    try:
        session_or_error = Session(model_dir, device)
    except AdapterError as exc:
        session_or_error = exc
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            request = {"op": None}
            stdout.write(json.dumps({"error": f"bad JSON: {exc}",
                                     "code": "INTERNAL"}) + "\n")
            stdout.flush()
            continue
        stdout.write(json.dumps(_handle(session_or_error, request)) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="serve a transformer over stdio JSON")
    parser.add_argument("--model", required=True, help="model name or local directory")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    serve(args.model, args.device)
    return 0


if __name__ == "__main__":
    sys.exit(main())
