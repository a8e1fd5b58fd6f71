import hashlib
import os


def hash_string_sha1_salt(input_string: str, salt: str | None = None) -> str:
    """
    使用 SHA1 和盐值哈希字符串。

    参数:
        input_string: 要哈希的字符串。
        salt: 要使用的盐值。如果为 None，将生成一个随机盐值。

    返回:
        哈希后的字符串。
    """
    if salt is None:
        salt = os.urandom(16).hex()

    salted_string = salt + input_string
    return hashlib.sha1(salted_string.encode("utf-8")).hexdigest()


def generate_run_id(subcommand: str, config_json: str, salt: str | None = None) -> str:
    """
    为一次运行生成 ID：子命令前缀加上配置的加盐 SHA1。
    同一配置重复运行得到不同的 ID；给定 salt 时结果确定。
    """
    return f"{subcommand}-{hash_string_sha1_salt(config_json, salt)[:16]}"
