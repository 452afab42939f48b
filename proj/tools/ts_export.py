#!/usr/bin/env python3
"""Export a tree-sitter parse tree in the codeprobe parse-tree import format.

One node per line: id<TAB>parent_id<TAB>kind<TAB>start<TAB>end, pre-order,
root has parent -1. Comment nodes are dropped (the embedded parser skips them).

    python3 tools/ts_export.py --language java File.java > File.java.ast.tsv
"""
import argparse
import sys

from tree_sitter import Language, Parser

COMMENT_KINDS = {"comment", "line_comment", "block_comment"}
DECLARATOR_KINDS = {"variable_declarator", "init_declarator"}


def load_language(name):
    if name == "java":
        import tree_sitter_java as mod
    elif name == "c":
        import tree_sitter_c as mod
    else:
        raise SystemExit(f"unsupported language: {name}")
    return Language(mod.language())


def export(tree, out, splice=False):
    next_id = 0

    def walk(node, parent):
        nonlocal next_id
        if node.type in COMMENT_KINDS:
            return
        if splice and node.type in DECLARATOR_KINDS:
            for child in node.children:
                walk(child, parent)
            return
        my_id = next_id
        next_id += 1
        out.write(f"{my_id}\t{parent}\t{node.type}\t{node.start_byte}\t{node.end_byte}\n")
        for child in node.children:
            walk(child, my_id)

    walk(tree.root_node, -1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--language", required=True, choices=["java", "c"])
    ap.add_argument("--splice-declarators", action="store_true",
                    help="inline variable_declarator/init_declarator children into the declaration")
    ap.add_argument("source")
    args = ap.parse_args()
    with open(args.source, "rb") as f:
        code = f.read()
    parser = Parser(load_language(args.language))
    export(parser.parse(code), sys.stdout, args.splice_declarators)


if __name__ == "__main__":
    main()
