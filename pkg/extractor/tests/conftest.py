import pytest
import torch


VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
         "i", "am", "so", "happy", "sad", "angry", "fine", "you", "what",
         "great", "bad", "no", "yes", "why", "ok", "x", "##s"]


@pytest.fixture(scope="session")
def tiny_lm_dir(tmp_path_factory):
    """A small randomly initialized masked-LM-style encoder with a word-piece
    tokenizer, standing in for the large pretrained LM in offline tests."""
    from transformers import BertConfig, BertModel, BertTokenizer

    d = tmp_path_factory.mktemp("tiny-lm")
    (d / "vocab.txt").write_text("\n".join(VOCAB))
    tokenizer = BertTokenizer(str(d / "vocab.txt"))
    torch.manual_seed(1234)
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=16, num_hidden_layers=4,
                        num_attention_heads=2, intermediate_size=32,
                        max_position_embeddings=64)
    model = BertModel(config)
    model.save_pretrained(d)
    tokenizer.save_pretrained(d)
    return str(d)


@pytest.fixture(scope="session")
def tiny_cs_dir(tmp_path_factory):
    """A small randomly initialized causal transformer (final-time-step
    activations) with the same word-piece tokenizer."""
    from transformers import BertTokenizer, GPT2Config, GPT2Model

    d = tmp_path_factory.mktemp("tiny-cs")
    (d / "vocab.txt").write_text("\n".join(VOCAB))
    tokenizer = BertTokenizer(str(d / "vocab.txt"))
    torch.manual_seed(5678)
    config = GPT2Config(vocab_size=len(VOCAB), n_embd=12, n_layer=2, n_head=2,
                        n_positions=64, bos_token_id=2, eos_token_id=3)
    model = GPT2Model(config)
    model.save_pretrained(d)
    tokenizer.save_pretrained(d)
    return str(d)


@pytest.fixture(scope="session")
def tiny_gen_dir(tmp_path_factory):
    """Causal LM (with head) for the discrete-generation debugging dump."""
    from transformers import BertTokenizer, GPT2Config, GPT2LMHeadModel

    d = tmp_path_factory.mktemp("tiny-gen")
    (d / "vocab.txt").write_text("\n".join(VOCAB))
    tokenizer = BertTokenizer(str(d / "vocab.txt"))
    torch.manual_seed(91011)
    config = GPT2Config(vocab_size=len(VOCAB), n_embd=12, n_layer=2, n_head=2,
                        n_positions=64, bos_token_id=2, eos_token_id=3)
    model = GPT2LMHeadModel(config)
    model.save_pretrained(d)
    tokenizer.save_pretrained(d)
    return str(d)


@pytest.fixture()
def generic_csv(tmp_path):
    rows = [
        ("d0", 0, "ann", "happy", "i am so happy"),
        ("d0", 1, "bob", "sad", "no i am sad"),
        ("d0", 2, "ann", "happy", "ok great"),
        ("d1", 0, "cat", "angry", "why so bad"),
        ("d1", 1, "dan", "happy", "i am fine"),
        ("d1", 2, "cat", "sad", "no"),
        ("d1", 3, "dan", "happy", "yes great"),
    ]
    path = tmp_path / "toy.csv"
    lines = ["dialogue_id,turn,speaker,label,text"]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
