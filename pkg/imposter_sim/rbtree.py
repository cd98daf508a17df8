"""
Red-black tree keyed by page content in memcmp order.
"""

from typing import Generic, Iterator, List, Optional, Tuple, TypeVar

V = TypeVar("V")

RED = True
BLACK = False


class _Node:
    __slots__ = ("key", "value", "color", "left", "right", "parent")

    def __init__(self, key: bytes, value, color: bool, nil: "Optional[_Node]" = None):
        self.key = key
        self.value = value
        self.color = color
        self.left = nil
        self.right = nil
        self.parent = nil


class ContentTree(Generic[V]):
    """
    Ordered map from page contents to frame numbers.

    Every three-way key comparison is counted in `comparisons`; the count of
    the most recent lookup is kept in `last_comparisons`.
    """

    def __init__(self):
        self.nil: _Node = _Node(b"", None, BLACK)
        self.nil.left = self.nil.right = self.nil.parent = self.nil
        self.root: _Node = self.nil
        self._size = 0
        self.comparisons = 0
        self.last_comparisons = 0

    def __len__(self) -> int:
        return self._size

    def __contains__(self, key: bytes) -> bool:
        return self._find(key) is not self.nil

    def __iter__(self) -> Iterator[bytes]:
        for key, _ in self.items():
            yield key

    def _cmp(self, a: bytes, b: bytes) -> int:
        self.comparisons += 1
        self.last_comparisons += 1
        return (a > b) - (a < b)

    def _find(self, key: bytes) -> _Node:
        self.last_comparisons = 0
        node = self.root
        while node is not self.nil:
            c = self._cmp(key, node.key)
            if c == 0:
                return node
            node = node.left if c < 0 else node.right
        return self.nil

    def search(self, key: bytes) -> Optional[V]:
        node = self._find(key)
        return None if node is self.nil else node.value

    def insert(self, key: bytes, value: V) -> None:
        """Insert `key`; an existing equal key has its value replaced."""
        self.last_comparisons = 0
        parent, node, c = self.nil, self.root, 0
        while node is not self.nil:
            parent = node
            c = self._cmp(key, node.key)
            if c == 0:
                node.value = value
                return
            node = node.left if c < 0 else node.right
        new = _Node(key, value, RED, self.nil)
        new.parent = parent
        if parent is self.nil:
            self.root = new
        elif c < 0:
            parent.left = new
        else:
            parent.right = new
        self._size += 1
        self._insert_fixup(new)

    def delete(self, key: bytes) -> V:
        z = self._find(key)
        if z is self.nil:
            raise KeyError(key)
        value = z.value
        y, y_color = z, z.color
        if z.left is self.nil:
            x = z.right
            self._transplant(z, z.right)
        elif z.right is self.nil:
            x = z.left
            self._transplant(z, z.left)
        else:
            y = self._minimum(z.right)
            y_color = y.color
            x = y.right
            if y.parent is z:
                x.parent = y
            else:
                self._transplant(y, y.right)
                y.right = z.right
                y.right.parent = y
            self._transplant(z, y)
            y.left = z.left
            y.left.parent = y
            y.color = z.color
        if y_color is BLACK:
            self._delete_fixup(x)
        self._size -= 1
        return value

    def clear(self) -> None:
        self.root = self.nil
        self._size = 0

    def items(self) -> List[Tuple[bytes, V]]:
        out: List[Tuple[bytes, V]] = []
        stack, node = [], self.root
        while stack or node is not self.nil:
            while node is not self.nil:
                stack.append(node)
                node = node.left
            node = stack.pop()
            out.append((node.key, node.value))
            node = node.right
        return out

    def values(self) -> List[V]:
        return [v for _, v in self.items()]

    def height(self) -> int:
        def walk(node: _Node) -> int:
            if node is self.nil:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def black_height(self) -> int:
        """Black height of the tree; raises AssertionError if paths disagree."""
        def walk(node: _Node) -> int:
            if node is self.nil:
                return 1
            left, right = walk(node.left), walk(node.right)
            assert left == right, "black heights differ"
            if node.color is RED:
                assert node.left.color is BLACK, "red node with red child"
                assert node.right.color is BLACK, "red node with red child"
            return left + (node.color is BLACK)

        assert self.root.color is BLACK or self.root is self.nil
        return walk(self.root)

    def _minimum(self, node: _Node) -> _Node:
        while node.left is not self.nil:
            node = node.left
        return node

    def _rotate_left(self, x: _Node) -> None:
        y = x.right
        x.right = y.left
        if y.left is not self.nil:
            y.left.parent = x
        y.parent = x.parent
        if x.parent is self.nil:
            self.root = y
        elif x is x.parent.left:
            x.parent.left = y
        else:
            x.parent.right = y
        y.left = x
        x.parent = y

    def _rotate_right(self, x: _Node) -> None:
        y = x.left
        x.left = y.right
        if y.right is not self.nil:
            y.right.parent = x
        y.parent = x.parent
        if x.parent is self.nil:
            self.root = y
        elif x is x.parent.right:
            x.parent.right = y
        else:
            x.parent.left = y
        y.right = x
        x.parent = y

    def _insert_fixup(self, z: _Node) -> None:
        while z.parent.color is RED:
            grand = z.parent.parent
            if z.parent is grand.left:
                uncle = grand.right
                if uncle.color is RED:
                    z.parent.color = uncle.color = BLACK
                    grand.color = RED
                    z = grand
                else:
                    if z is z.parent.right:
                        z = z.parent
                        self._rotate_left(z)
                    z.parent.color = BLACK
                    z.parent.parent.color = RED
                    self._rotate_right(z.parent.parent)
            else:
                uncle = grand.left
                if uncle.color is RED:
                    z.parent.color = uncle.color = BLACK
                    grand.color = RED
                    z = grand
                else:
                    if z is z.parent.left:
                        z = z.parent
                        self._rotate_right(z)
                    z.parent.color = BLACK
                    z.parent.parent.color = RED
                    self._rotate_left(z.parent.parent)
        self.root.color = BLACK

    def _transplant(self, u: _Node, v: _Node) -> None:
        if u.parent is self.nil:
            self.root = v
        elif u is u.parent.left:
            u.parent.left = v
        else:
            u.parent.right = v
        v.parent = u.parent

    def _delete_fixup(self, x: _Node) -> None:
        while x is not self.root and x.color is BLACK:
            if x is x.parent.left:
                w = x.parent.right
                if w.color is RED:
                    w.color = BLACK
                    x.parent.color = RED
                    self._rotate_left(x.parent)
                    w = x.parent.right
                if w.left.color is BLACK and w.right.color is BLACK:
                    w.color = RED
                    x = x.parent
                else:
                    if w.right.color is BLACK:
                        w.left.color = BLACK
                        w.color = RED
                        self._rotate_right(w)
                        w = x.parent.right
                    w.color = x.parent.color
                    x.parent.color = BLACK
                    w.right.color = BLACK
                    self._rotate_left(x.parent)
                    x = self.root
            else:
                w = x.parent.left
                if w.color is RED:
                    w.color = BLACK
                    x.parent.color = RED
                    self._rotate_right(x.parent)
                    w = x.parent.left
                if w.right.color is BLACK and w.left.color is BLACK:
                    w.color = RED
                    x = x.parent
                else:
                    if w.left.color is BLACK:
                        w.right.color = BLACK
                        w.color = RED
                        self._rotate_left(w)
                        w = x.parent.left
                    w.color = x.parent.color
                    x.parent.color = BLACK
                    w.left.color = BLACK
                    self._rotate_right(x.parent)
                    x = self.root
        x.color = BLACK
